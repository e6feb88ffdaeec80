#pragma once

#include <cstddef>
#include <limits>

namespace tabvfl::eval {

// Lower is better. Strict improvement resets the counter; training stops on
// the epoch where `patience` non-improving epochs in a row have been seen.
// patience 0 never stops.
class EarlyStopper {
 public:
  explicit EarlyStopper(std::size_t patience) : patience_(patience) {}

  // Returns true when training should stop after this epoch.
  bool update(double score) {
    if (score < best_) {
      best_ = score;
      since_ = 0;
    } else {
      ++since_;
    }
    return patience_ > 0 && since_ >= patience_;
  }

  std::size_t patience() const { return patience_; }
  double best() const { return best_; }
  std::size_t since_improvement() const { return since_; }

 private:
  std::size_t patience_;
  double best_ = std::numeric_limits<double>::infinity();
  std::size_t since_ = 0;
};

}  // namespace tabvfl::eval
