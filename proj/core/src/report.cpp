#include "iqtcfm/report.hpp"

#include <array>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <nlohmann/json.hpp>

#include "iqtcfm/errors.hpp"

namespace iqtcfm {
namespace {

std::string fmt(double v) { return nlohmann::json(v).dump(); }

std::string fixed(double v, int prec) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(prec) << v;
  return os.str();
}

std::string group_digits(uint64_t n) {
  std::string raw = std::to_string(n);
  std::string out;
  for (size_t i = 0; i < raw.size(); ++i) {
    if (i > 0 && (raw.size() - i) % 3 == 0) out += ',';
    out += raw[i];
  }
  return out;
}

// Code-point count; the table arrows are multi-byte but single-column.
size_t display_width(const std::string& s) {
  size_t n = 0;
  for (unsigned char c : s)
    if ((c & 0xC0) != 0x80) ++n;
  return n;
}

std::vector<std::string> split_fields(const std::string& line, size_t expect,
                                      const std::string& path) {
  std::vector<std::string> out;
  size_t pos = 0;
  while (true) {
    size_t c = line.find(',', pos);
    if (c == std::string::npos) {
      out.push_back(line.substr(pos));
      break;
    }
    out.push_back(line.substr(pos, c - pos));
    pos = c + 1;
  }
  if (out.size() != expect)
    throw IoError(path + ": malformed CSV line: " + line);
  return out;
}

double parse_double(const std::string& s, const std::string& path) {
  try {
    size_t used = 0;
    double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw IoError(path + ": bad numeric field \"" + s + "\"");
  }
}

}  // namespace

void write_per_image_csv(const std::vector<MetricResult>& rows,
                         const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << "subject_id,method,psnr,ssim,lpips\n";
  for (const MetricResult& r : rows) {
    out << r.subject_id << ',' << r.method << ',' << fmt(r.psnr_db) << ',' << fmt(r.ssim_val)
        << ',';
    if (r.lpips) out << fmt(*r.lpips);
    out << '\n';
  }
  if (!out) throw IoError("short write to " + path.string());
}

std::vector<MetricResult> read_per_image_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != "subject_id,method,psnr,ssim,lpips")
    throw IoError(path.string() + ": unrecognized per-image CSV header");
  std::vector<MetricResult> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto f = split_fields(line, 5, path.string());
    MetricResult r;
    r.subject_id = f[0];
    r.method = f[1];
    r.psnr_db = parse_double(f[2], path.string());
    r.ssim_val = parse_double(f[3], path.string());
    if (!f[4].empty()) r.lpips = parse_double(f[4], path.string());
    rows.push_back(std::move(r));
  }
  return rows;
}

void write_report_csv(const EvaluationReport& rep, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << "method,n_images,excluded,psnr_mean,psnr_std,ssim_mean,ssim_std,"
         "lpips_mean,lpips_std,lpips_n,params\n";
  for (const AggregateRow& r : rep.rows) {
    out << r.method << ',' << r.n_images << ',' << r.excluded << ',';
    if (r.n_images > 0)
      out << fmt(r.psnr_mean) << ',' << fmt(r.psnr_std) << ',' << fmt(r.ssim_mean) << ','
          << fmt(r.ssim_std) << ',';
    else
      out << ",,,,";
    if (r.lpips_mean) out << fmt(*r.lpips_mean);
    out << ',';
    if (r.lpips_std) out << fmt(*r.lpips_std);
    out << ',' << r.lpips_n << ',';
    if (r.param_count) out << *r.param_count;
    out << '\n';
  }
  if (!out) throw IoError("short write to " + path.string());
}

void write_report_text(const EvaluationReport& rep, const std::filesystem::path& path) {
  std::vector<std::array<std::string, 5>> cells;
  cells.push_back({"Method", "PSNR↑ (dB)", "SSIM↑", "LPIPS↓", "Params↓"});
  for (const AggregateRow& r : rep.rows) {
    std::array<std::string, 5> row;
    row[0] = r.method;
    if (r.n_images > 0) {
      row[1] = fixed(r.psnr_mean, 3) + " ± " + fixed(r.psnr_std, 3);
      row[2] = fixed(r.ssim_mean, 4) + " ± " + fixed(r.ssim_std, 4);
    } else {
      row[1] = row[2] = "n/a";
    }
    row[3] = r.lpips_mean ? fixed(*r.lpips_mean, 4) + " ± " + fixed(*r.lpips_std, 4) : "n/a";
    row[4] = r.param_count ? std::to_string(*r.param_count) : "n/a";
    cells.push_back(row);
  }

  std::array<size_t, 5> width{};
  for (const auto& row : cells)
    for (size_t c = 0; c < 5; ++c) width[c] = std::max(width[c], display_width(row[c]));

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << "Quantitative results: split " << rep.split << " (n=" << rep.split_size
      << "), dataset digest " << rep.config_digest << "\n\n";
  size_t total = 0;
  for (size_t c = 0; c < 5; ++c) total += width[c] + (c ? 2 : 0);
  for (size_t i = 0; i < cells.size(); ++i) {
    const auto& row = cells[i];
    for (size_t c = 0; c < 5; ++c) {
      if (c) out << "  ";
      out << row[c] << std::string(width[c] - display_width(row[c]), ' ');
    }
    out << '\n';
    if (i == 0) out << std::string(total, '-') << '\n';
  }

  out << "\nNotes:\n";
  out << "- values are mean ± std over n images; std is the population standard deviation"
         " (divide by N).\n";
  bool any_lpips = false;
  for (const AggregateRow& r : rep.rows) {
    if (r.excluded > 0)
      out << "- " << r.method << ": " << r.excluded << " of " << rep.split_size
          << " records excluded (no usable reconstruction).\n";
    if (r.lpips_n > 0) {
      any_lpips = true;
      if (r.lpips_n < r.n_images)
        out << "- " << r.method << ": LPIPS aggregated over " << r.lpips_n << " of "
            << r.n_images << " images.\n";
    }
  }
  if (!any_lpips)
    out << "- LPIPS requires an external scorer; none was registered (n/a).\n";
  bool first = true;
  for (const AggregateRow& r : rep.rows) {
    if (!r.param_count) continue;
    if (first) {
      out << "- parameter counts, this configuration:";
      first = false;
    } else {
      out << ';';
    }
    out << ' ' << r.method << ' ' << *r.param_count;
  }
  if (!first)
    out << "; published reference model: " << group_digits(kReferenceParamCount) << ".\n";
  if (!out) throw IoError("short write to " + path.string());
}

}  // namespace iqtcfm
