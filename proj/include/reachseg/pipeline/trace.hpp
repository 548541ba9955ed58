#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

namespace reachseg {

/// Loss values recorded during training, one entry per (stage, iteration,
/// loss, split). Stage-3 epoch summaries (reach, spend, slack, dual) share the
/// same table.
class ConvergenceTrace {
 public:
  struct Entry {
    std::string stage;
    std::size_t iteration = 0;
    std::string loss_name;
    std::string split;
    double value = 0.0;
  };

  /// Throws NumericError for a non-finite value and invalid_argument when the
  /// iteration goes backwards within a (stage, loss, split) series.
  void add(const std::string& stage, std::size_t iteration, const std::string& loss_name,
           const std::string& split, double value);

  const std::vector<Entry>& entries() const { return entries_; }
  std::size_t count(const std::string& stage, const std::string& loss_name,
                    const std::string& split) const;
  std::vector<double> series(const std::string& stage, const std::string& loss_name,
                             const std::string& split) const;
  bool has_stage(const std::string& stage) const;
  void append(const ConvergenceTrace& other);

  /// Columns: stage,iteration,loss_name,split,value.
  std::string to_csv() const;
  void save_csv(const std::filesystem::path& path) const;

 private:
  std::vector<Entry> entries_;
};

/// Round-trip decimal formatting used by every CSV writer.
std::string format_double(double value);

}  // namespace reachseg
