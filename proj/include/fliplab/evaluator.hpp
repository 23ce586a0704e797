#pragma once

#include <cstddef>

#include "fliplab/dataset.hpp"
#include "fliplab/fault.hpp"
#include "fliplab/model.hpp"

namespace fliplab {

/// Perturb-evaluate-restore helper that counts model evaluations. Owns a
/// private working copy so callers' models are never touched.
class Evaluator {
  public:
    Evaluator(const QuantizedModel& model, const Dataset& data, ExitSelector exit = {})
        : model_(model), data_(data), exit_(exit) {}

    double accuracy(const BitFlipSet& flips) {
        ++count_;
        return with_flips(model_, flips, [&](const QuantizedModel& m) { return evaluate_accuracy(m, data_, exit_); });
    }

    double baseline() {
        ++count_;
        return evaluate_accuracy(model_, data_, exit_);
    }

    std::size_t evaluations() const { return count_; }
    const QuantizedModel& model() const { return model_; }
    const Dataset& data() const { return data_; }

  private:
    QuantizedModel model_;
    const Dataset& data_;
    ExitSelector exit_;
    std::size_t count_ = 0;
};

}  // namespace fliplab
