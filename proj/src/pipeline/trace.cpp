#include "reachseg/pipeline/trace.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

#include "reachseg/errors.hpp"
#include "reachseg/fileio.hpp"

namespace reachseg {

std::string format_double(double value) {
  char buffer[32];
  std::snprintf(buffer, sizeof buffer, "%.17g", value);
  return buffer;
}

void ConvergenceTrace::add(const std::string& stage, std::size_t iteration,
                           const std::string& loss_name, const std::string& split, double value) {
  if (!std::isfinite(value)) {
    throw NumericError(stage + ": non-finite " + loss_name + " (" + split + ") at iteration " +
                       std::to_string(iteration));
  }
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
    if (it->stage == stage && it->loss_name == loss_name && it->split == split) {
      if (iteration < it->iteration) {
        throw std::invalid_argument("ConvergenceTrace: iteration index went backwards");
      }
      break;
    }
  }
  entries_.push_back({stage, iteration, loss_name, split, value});
}

std::size_t ConvergenceTrace::count(const std::string& stage, const std::string& loss_name,
                                    const std::string& split) const {
  std::size_t n = 0;
  for (const Entry& e : entries_) {
    if (e.stage == stage && e.loss_name == loss_name && e.split == split) ++n;
  }
  return n;
}

std::vector<double> ConvergenceTrace::series(const std::string& stage,
                                             const std::string& loss_name,
                                             const std::string& split) const {
  std::vector<double> out;
  for (const Entry& e : entries_) {
    if (e.stage == stage && e.loss_name == loss_name && e.split == split) out.push_back(e.value);
  }
  return out;
}

bool ConvergenceTrace::has_stage(const std::string& stage) const {
  for (const Entry& e : entries_) {
    if (e.stage == stage) return true;
  }
  return false;
}

void ConvergenceTrace::append(const ConvergenceTrace& other) {
  entries_.insert(entries_.end(), other.entries_.begin(), other.entries_.end());
}

std::string ConvergenceTrace::to_csv() const {
  std::ostringstream out;
  out << "stage,iteration,loss_name,split,value\n";
  for (const Entry& e : entries_) {
    out << e.stage << ',' << e.iteration << ',' << e.loss_name << ',' << e.split << ','
        << format_double(e.value) << '\n';
  }
  return out.str();
}

void ConvergenceTrace::save_csv(const std::filesystem::path& path) const {
  write_text_file(path, to_csv());
}

}  // namespace reachseg
