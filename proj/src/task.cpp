#include "gdvm/task.hpp"

namespace gdvm {

std::string task_family_name(TaskFamily family) {
  switch (family) {
    case TaskFamily::kMultiClass: return "multi_class";
    case TaskFamily::kMultiLabel: return "multi_label";
    case TaskFamily::kZeroShot: return "zero_shot";
  }
  return "?";
}

TaskFamily task_family_from_name(std::string_view name) {
  if (name == "multi_class") return TaskFamily::kMultiClass;
  if (name == "multi_label") return TaskFamily::kMultiLabel;
  if (name == "zero_shot") return TaskFamily::kZeroShot;
  throw ConfigError("unknown task kind '" + std::string(name) + "'");
}

}  // namespace gdvm
