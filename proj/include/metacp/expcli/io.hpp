#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "metacp/expcli/curve.hpp"
#include "metacp/meta.hpp"
#include "metacp/ppo.hpp"

namespace metacp::exp {

// Missing, unreadable or malformed input/output files.
struct FileError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Numeric CSV cells are written with "%.10g".
std::string format_number(double v);

// Writes to `<path>.tmp` and renames over `path`. Creates parent dirs.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);
std::string read_file(const std::filesystem::path& path);

inline constexpr std::string_view kCurveHeader =
    "label,seed,epoch,mean_reward,smoothed_reward";
inline constexpr std::string_view kStatsHeader =
    "epoch,mean_reward,actor_loss,critic_loss,feasible_rate,switch_rate,wall_ms";
inline constexpr std::string_view kHistoryHeader =
    "iteration,mean_adaptation_loss,grad_norm";

std::string curve_csv(std::span<const RewardCurve> curves);
std::string stats_csv(std::span<const ppo::EpochStats> stats);
std::string history_csv(std::span<const meta::IterationRecord> history);

// Parses curve CSV text (one or more curves in long format). Rows are grouped
// by (label, seed) in order of first appearance and must carry epochs
// 0, 1, 2, ... per group. Errors name the source and 1-based line number.
std::vector<RewardCurve> parse_curve_csv(std::string_view text,
                                         std::string_view source);

// Line chart of the smoothed series with one polyline per curve.
std::string render_svg(std::span<const RewardCurve> curves);

nn::Checkpoint to_checkpoint(const ppo::PolicyModel& model, std::string tag);
ppo::PolicyModel from_checkpoint(const nn::Checkpoint& ckpt);

}  // namespace metacp::exp
