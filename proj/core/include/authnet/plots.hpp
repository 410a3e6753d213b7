#pragma once

#include <filesystem>
#include <string>

#include "authnet/metrics.hpp"

namespace authnet::plots {

/// ROC curve with the chance diagonal and the EER intersection marked.
void render_roc(const std::filesystem::path& path, const metrics::RocCurve& curve,
                const std::string& title);

/// 2x2 confusion-matrix heatmap with counts printed in the cells.
void render_confusion(const std::filesystem::path& path, const metrics::ConfusionMatrix& cm,
                      const std::string& title);

}  // namespace authnet::plots
