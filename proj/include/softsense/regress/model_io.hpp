#pragma once

#include <filesystem>

#include <nlohmann/json.hpp>

#include "softsense/regress/model.hpp"
#include "softsense/regress/train.hpp"

namespace softsense::regress {

inline constexpr std::uint32_t kModelFormatVersion = 1;

/// Versioned binary container: 8-byte magic "SSDKLMDL", u32 version, u64
/// header length, JSON header (kind, shapes, fingerprint, metadata), then
/// little-endian doubles: kernel (4), y_offset, y_scale, jitter, per-layer W and b
/// (column-major), X_train, y_train, Cholesky factor, weights.
void save_model(const std::filesystem::path& path, const RegressorModel& model);

/// Throws std::runtime_error on a bad magic, unknown version, truncated
/// payload, fingerprint mismatch, or a cached factor that no longer matches
/// the stored hyperparameters and data.
RegressorModel load_model(const std::filesystem::path& path);

/// Human-readable training summary (options, per-restart diagnostics, selection).
nlohmann::json training_summary(const TrainResult& r, const TrainOptions& opt);

}  // namespace softsense::regress
