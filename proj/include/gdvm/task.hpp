#pragma once

#include <cstddef>
#include <string>
#include <string_view>

#include "gdvm/errors.hpp"

namespace gdvm {

// What the classifier head predicts and how it is scored. The full task data
// (e.g. zero-shot prototype matrices) travels with the Dataset; models only
// need the family and the output width.
enum class TaskFamily { kMultiClass, kMultiLabel, kZeroShot };

struct TaskSpec {
  TaskFamily family = TaskFamily::kMultiClass;
  std::size_t output_dim = 0;  // n_classes, n_labels, or attr_dim
};

std::string task_family_name(TaskFamily family);
TaskFamily task_family_from_name(std::string_view name);

}  // namespace gdvm
