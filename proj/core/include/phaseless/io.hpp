#pragma once

#include "phaseless/forward.hpp"
#include "phaseless/geodesics.hpp"
#include "phaseless/medium.hpp"
#include "phaseless/recovery.hpp"
#include "phaseless/tomography.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

// File formats. Numbers are written with 17 significant digits so a
// write/read cycle is lossless and repeated runs are byte-identical.
namespace phaseless::io {

namespace fs = std::filesystem;

class FileNotFound : public IoError {
 public:
  using IoError::IoError;
};

std::string format_double(double v);

// Flat little-endian float64 arrays.
void write_f64(const fs::path& path, std::span<const double> values);
std::vector<double> read_f64(const fs::path& path);

// Phantom file: {kind, center, epsilon, sigma, support_radius, grid}. Kind
// "sampled" reads node values from the sidecar named by "values_file"
// (relative to the JSON file).
struct FieldFile {
  medium::RefractiveField field = medium::RefractiveField::vacuum();
  std::optional<medium::PhantomSpec> phantom;
  std::optional<GridSpec> grid;
};

FieldFile read_field(const fs::path& path);
void write_phantom(const fs::path& path, const medium::PhantomSpec& spec,
                   const std::optional<GridSpec>& grid = std::nullopt);
// Samples `field` at the nodes of `grid`; writes JSON + <stem>.f64 sidecar.
void write_sampled_field(const fs::path& path, const medium::RefractiveField& field,
                         const GridSpec& grid);

// src_id, rcv_id, src_xyz, rcv_xyz, tau, residual, failed. xyz cells hold
// three space-separated numbers.
void write_table_csv(const fs::path& path, const geodesics::TravelTimeTable& table);
geodesics::TravelTimeTable read_table_csv(const fs::path& path);

// <dir>/manifest.json, <dir>/spectra/pair_NNNNN.csv (k, f), <dir>/table.csv.
void write_dataset(const fs::path& dir, const forward::Dataset& ds);

struct DatasetFiles {
  std::vector<forward::PhaselessSpectrum> spectra;
  forward::KGrid kgrid;
  forward::RemainderModel remainder;
  std::uint64_t seed = 0;
  std::vector<forward::DatasetGap> gaps;
};

// Reads the manifest and spectra only (never the travel-time table).
DatasetFiles read_dataset(const fs::path& dir);

// One row per estimate. When the spectra carry synthetic provenance, adds
// tau_true and tau_rel_error columns.
void write_recovery_report(const fs::path& path,
                           std::span<const recovery::TravelTimeEstimate> estimates,
                           std::span<const forward::PhaselessSpectrum> spectra);
// Travel-time table built from recovered taus; failed recoveries are marked failed.
geodesics::TravelTimeTable recovered_table(std::span<const recovery::TravelTimeEstimate> estimates,
                                           std::span<const forward::PhaselessSpectrum> spectra);
// k, f, g per sample and the refined zeros, for plotting.
void write_diagnostics(const fs::path& dir, const forward::PhaselessSpectrum& spec,
                       const recovery::TravelTimeEstimate& est,
                       const recovery::ZeroOptions& zero_opts = {});

// <dir>/model.json, <dir>/model_values.f64 (n_hat at nodes),
// <dir>/model_deviations.f64 (spline deviations).
void write_model(const fs::path& dir, const tomography::TomographyModel& model);
tomography::TomographyModel read_model(const fs::path& json_path);

void write_history_csv(const fs::path& path,
                       std::span<const tomography::IterationRecord> history);

}  // namespace phaseless::io
