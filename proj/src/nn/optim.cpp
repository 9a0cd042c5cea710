#include "scopeqa/nn/optim.hpp"

#include <algorithm>

namespace scopeqa::nn {

double PlateauTracker::update(double loss) {
  if (!have_best_) {
    have_best_ = true;
    best_ = loss;
    return lr_;
  }
  if (best_ - loss >= s_.min_delta) {
    best_ = loss;
    stalls_ = 0;
    return lr_;
  }
  best_ = std::min(best_, loss);
  if (++stalls_ >= s_.patience) {
    if (lr_ > s_.min_lr) lr_ = std::max(lr_ * s_.factor, s_.min_lr);
    stalls_ = 0;
  }
  return lr_;
}

double plateau_update(const PlateauSchedule& schedule, double lr,
                      const std::vector<double>& history) {
  require(!history.empty(), ErrorCode::kPrecondition,
          "plateau_update needs a nonempty loss history");
  PlateauTracker tracker(schedule, lr);
  for (double loss : history) tracker.update(loss);
  return tracker.lr();
}

}  // namespace scopeqa::nn
