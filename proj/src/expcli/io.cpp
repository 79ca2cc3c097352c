#include "metacp/expcli/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

namespace metacp::exp {

std::string format_number(double v) {
  if (v == 0.0) v = 0.0;  // no "-0"
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

void write_file_atomic(const std::filesystem::path& path, std::string_view content) {
  std::error_code ec;
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path(), ec);
    if (ec) throw FileError("cannot create " + path.parent_path().string() + ": " + ec.message());
  }
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw FileError("cannot write " + tmp.string());
    f.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!f) throw FileError("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw FileError("cannot rename " + tmp.string() + ": " + ec.message());
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FileError("cannot open " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

std::string curve_csv(std::span<const RewardCurve> curves) {
  std::string out(kCurveHeader);
  out += '\n';
  for (const auto& c : curves) {
    if (c.raw.size() != c.smoothed.size()) {
      throw std::invalid_argument("curve " + c.label + ": raw/smoothed length mismatch");
    }
    for (std::size_t e = 0; e < c.raw.size(); ++e) {
      out += c.label;
      out += ',' + std::to_string(c.seed) + ',' + std::to_string(e) + ',';
      out += format_number(c.raw[e]) + ',' + format_number(c.smoothed[e]) + '\n';
    }
  }
  return out;
}

std::string stats_csv(std::span<const ppo::EpochStats> stats) {
  std::string out(kStatsHeader);
  out += '\n';
  for (const auto& s : stats) {
    out += std::to_string(s.epoch);
    for (double v : {s.mean_reward, s.actor_loss, s.critic_loss, s.feasible_rate,
                     s.switch_rate, s.wall_ms}) {
      out += ',' + format_number(v);
    }
    out += '\n';
  }
  return out;
}

std::string history_csv(std::span<const meta::IterationRecord> history) {
  std::string out(kHistoryHeader);
  out += '\n';
  for (const auto& h : history) {
    out += std::to_string(h.iteration) + ',' + format_number(h.mean_adaptation_loss) +
           ',' + format_number(h.grad_norm) + '\n';
  }
  return out;
}

namespace {

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(sep, start);
    out.push_back(line.substr(start, pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

template <class T>
bool parse_value(std::string_view s, T& out) {
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc() && ptr == end;
}

}  // namespace

std::vector<RewardCurve> parse_curve_csv(std::string_view text,
                                         std::string_view source) {
  auto fail = [&](std::size_t line, const std::string& what) {
    return FileError(std::string(source) + ":" + std::to_string(line) + ": " + what);
  };

  std::vector<std::string_view> lines = split(text, '\n');
  if (!lines.empty() && lines.back().empty()) lines.pop_back();
  if (lines.empty()) throw fail(1, "empty file");
  for (auto& l : lines) {
    if (!l.empty() && l.back() == '\r') l.remove_suffix(1);
  }

  const auto header = split(lines[0], ',');
  const std::vector<std::string_view> want = {"label", "seed", "epoch", "mean_reward",
                                              "smoothed_reward"};
  std::map<std::string_view, std::size_t> col;
  for (std::size_t i = 0; i < header.size(); ++i) col[header[i]] = i;
  for (auto name : want) {
    if (!col.count(name)) throw fail(1, "missing column '" + std::string(name) + "'");
  }

  std::vector<RewardCurve> curves;
  std::map<std::pair<std::string, std::uint64_t>, std::size_t> index;
  for (std::size_t n = 1; n < lines.size(); ++n) {
    const std::size_t line_no = n + 1;
    const auto cells = split(lines[n], ',');
    if (cells.size() != header.size()) {
      throw fail(line_no, "expected " + std::to_string(header.size()) + " fields, got " +
                              std::to_string(cells.size()));
    }
    std::uint64_t seed = 0;
    std::size_t epoch = 0;
    double raw = 0.0;
    double smoothed = 0.0;
    if (!parse_value(cells[col["seed"]], seed)) throw fail(line_no, "bad seed");
    if (!parse_value(cells[col["epoch"]], epoch)) throw fail(line_no, "bad epoch");
    if (!parse_value(cells[col["mean_reward"]], raw) || !std::isfinite(raw)) {
      throw fail(line_no, "bad mean_reward");
    }
    if (!parse_value(cells[col["smoothed_reward"]], smoothed) || !std::isfinite(smoothed)) {
      throw fail(line_no, "bad smoothed_reward");
    }
    const std::string label(cells[col["label"]]);
    auto [it, fresh] = index.try_emplace({label, seed}, curves.size());
    if (fresh) {
      curves.push_back({});
      curves.back().label = label;
      curves.back().seed = seed;
    }
    auto& c = curves[it->second];
    if (epoch != c.raw.size()) {
      throw fail(line_no, "epoch " + std::to_string(epoch) + " out of sequence for " +
                              label + " (expected " + std::to_string(c.raw.size()) + ")");
    }
    c.raw.push_back(raw);
    c.smoothed.push_back(smoothed);
  }
  return curves;
}

std::string render_svg(std::span<const RewardCurve> curves) {
  constexpr double kWidth = 800, kHeight = 480;
  constexpr double kLeft = 70, kRight = 200, kTop = 20, kBottom = 50;
  static constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                             "#9467bd", "#8c564b", "#e377c2", "#17becf"};
  if (curves.empty()) throw std::invalid_argument("render_svg: no curves");

  const std::size_t n = curves.front().smoothed.size();
  double lo = INFINITY, hi = -INFINITY;
  for (const auto& c : curves) {
    if (c.smoothed.size() != n) {
      throw std::invalid_argument("curves have mismatched lengths (" + curves.front().label +
                                  ": " + std::to_string(n) + ", " + c.label + ": " +
                                  std::to_string(c.smoothed.size()) + ")");
    }
    for (double v : c.smoothed) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  if (n == 0) throw std::invalid_argument("render_svg: empty curves");
  if (hi <= lo) {
    hi += 0.5 * std::max(std::abs(hi), 1e-9);
    lo -= 0.5 * std::max(std::abs(lo), 1e-9);
  }
  const double pw = kWidth - kLeft - kRight;
  const double ph = kHeight - kTop - kBottom;
  auto x_of = [&](std::size_t e) {
    return kLeft + (n == 1 ? 0.0 : pw * static_cast<double>(e) / static_cast<double>(n - 1));
  };
  auto y_of = [&](double v) { return kTop + ph * (hi - v) / (hi - lo); };
  auto fixed = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return std::string(buf);
  };

  std::string out;
  out += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fixed(kWidth) +
         "\" height=\"" + fixed(kHeight) + "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  out += "<rect x=\"0\" y=\"0\" width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out += "<rect x=\"" + fixed(kLeft) + "\" y=\"" + fixed(kTop) + "\" width=\"" + fixed(pw) +
         "\" height=\"" + fixed(ph) + "\" fill=\"none\" stroke=\"black\"/>\n";
  out += "<text x=\"" + fixed(kLeft + pw / 2) + "\" y=\"" + fixed(kHeight - 12) +
         "\" text-anchor=\"middle\">epoch</text>\n";
  out += "<text x=\"14\" y=\"" + fixed(kTop + ph / 2) + "\" transform=\"rotate(-90 14 " +
         fixed(kTop + ph / 2) + ")\" text-anchor=\"middle\">smoothed reward</text>\n";
  for (int t = 0; t <= 4; ++t) {
    const double v = lo + (hi - lo) * t / 4.0;
    out += "<text x=\"" + fixed(kLeft - 6) + "\" y=\"" + fixed(y_of(v) + 4) +
           "\" text-anchor=\"end\">" + format_number(v) + "</text>\n";
    const std::size_t e = (n - 1) * static_cast<std::size_t>(t) / 4;
    out += "<text x=\"" + fixed(x_of(e)) + "\" y=\"" + fixed(kTop + ph + 16) +
           "\" text-anchor=\"middle\">" + std::to_string(e) + "</text>\n";
  }
  for (std::size_t i = 0; i < curves.size(); ++i) {
    const char* color = kPalette[i % std::size(kPalette)];
    out += "<polyline fill=\"none\" stroke=\"" + std::string(color) +
           "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t e = 0; e < n; ++e) {
      if (e) out += ' ';
      out += fixed(x_of(e)) + ',' + fixed(y_of(curves[i].smoothed[e]));
    }
    out += "\"/>\n";
    const double ly = kTop + 10 + 18.0 * static_cast<double>(i);
    out += "<line x1=\"" + fixed(kWidth - kRight + 12) + "\" y1=\"" + fixed(ly) + "\" x2=\"" +
           fixed(kWidth - kRight + 32) + "\" y2=\"" + fixed(ly) + "\" stroke=\"" + color +
           "\" stroke-width=\"2\"/>\n";
    std::string text = curves[i].label + " (seed " + std::to_string(curves[i].seed) + ")";
    std::string escaped;
    for (char ch : text) {
      switch (ch) {
        case '<': escaped += "&lt;"; break;
        case '>': escaped += "&gt;"; break;
        case '&': escaped += "&amp;"; break;
        default: escaped += ch;
      }
    }
    out += "<text x=\"" + fixed(kWidth - kRight + 38) + "\" y=\"" + fixed(ly + 4) + "\">" +
           escaped + "</text>\n";
  }
  out += "</svg>\n";
  return out;
}

nn::Checkpoint to_checkpoint(const ppo::PolicyModel& model, std::string tag) {
  return {std::move(tag), {model.actor, model.critic}};
}

ppo::PolicyModel from_checkpoint(const nn::Checkpoint& ckpt) {
  if (ckpt.networks.size() != 2) {
    throw FileError("checkpoint '" + ckpt.tag + "' holds " +
                    std::to_string(ckpt.networks.size()) + " networks, expected 2");
  }
  const auto& actor = ckpt.networks[0].spec;
  const auto& critic = ckpt.networks[1].spec;
  if (actor.head_activation != nn::HeadActivation::Softmax || actor.head_dim != 2 ||
      critic.output_dim() != 1 || actor.input_dim != critic.input_dim ||
      actor.input_dim != ppo::feature_dim(actor.heads)) {
    throw FileError("checkpoint '" + ckpt.tag + "' is not an actor/critic pair");
  }
  return {ckpt.networks[0], ckpt.networks[1]};
}

}  // namespace metacp::exp
