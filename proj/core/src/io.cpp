#include "phaseless/io.hpp"

#include "json.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

namespace phaseless::io {

using nlohmann::json;

namespace {

std::ofstream open_out(const fs::path& path, bool binary = false) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, binary ? std::ios::binary : std::ios::out);
  if (!out) throw IoError("cannot write " + path.string());
  return out;
}

std::ifstream open_in(const fs::path& path, bool binary = false) {
  if (!fs::exists(path)) throw FileNotFound("missing file " + path.string());
  std::ifstream in(path, binary ? std::ios::binary : std::ios::in);
  if (!in) throw IoError("cannot read " + path.string());
  return in;
}

json read_json(const fs::path& path) {
  auto in = open_in(path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

void write_json(const fs::path& path, const json& j) {
  auto out = open_out(path);
  out << j.dump(2) << '\n';
}

json vec_json(const Vec3& v) { return json::array({v[0], v[1], v[2]}); }

Vec3 json_vec(const json& j) {
  if (!j.is_array() || j.size() != 3) throw IoError("expected a 3-vector");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

json grid_json(const GridSpec& g) {
  return {{"origin", vec_json(g.origin)},
          {"spacing", vec_json(g.spacing)},
          {"dims", json::array({g.dims[0], g.dims[1], g.dims[2]})}};
}

GridSpec json_grid(const json& j) {
  GridSpec g;
  g.origin = json_vec(j.at("origin"));
  g.spacing = json_vec(j.at("spacing"));
  const auto& d = j.at("dims");
  if (!d.is_array() || d.size() != 3) throw IoError("grid dims must have 3 entries");
  for (int a = 0; a < 3; ++a) g.dims[a] = d[a].get<int>();
  return g;
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, sep)) out.push_back(cell);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

double parse_double(const std::string& s) {
  if (s == "nan") return std::nan("");
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str()) throw IoError("bad number '" + s + "'");
  return v;
}

std::string xyz(const Vec3& v) {
  return format_double(v[0]) + " " + format_double(v[1]) + " " + format_double(v[2]);
}

Vec3 parse_xyz(const std::string& s) {
  std::istringstream ss(s);
  std::string a, b, c;
  ss >> a >> b >> c;
  if (c.empty()) throw IoError("bad xyz cell '" + s + "'");
  return {parse_double(a), parse_double(b), parse_double(c)};
}

std::string pair_file(int pair_id) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "pair_%05d.csv", pair_id);
  return buf;
}

json remainder_json(const forward::RemainderModel& r) {
  return {{"kind", forward::to_string(r.kind)},
          {"c", json::array({r.c.real(), r.c.imag()})},
          {"bandwidth", r.bandwidth},
          {"components", r.components}};
}

forward::RemainderModel json_remainder(const json& j) {
  forward::RemainderModel r;
  r.kind = forward::remainder_kind_from_string(j.at("kind").get<std::string>());
  const auto& c = j.at("c");
  r.c = {c.at(0).get<double>(), c.at(1).get<double>()};
  r.bandwidth = j.value("bandwidth", r.bandwidth);
  r.components = j.value("components", r.components);
  return r;
}

}  // namespace

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_f64(const fs::path& path, std::span<const double> values) {
  auto out = open_out(path, true);
  for (double v : values) {
    auto bits = std::bit_cast<std::uint64_t>(v);
    if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap64(bits);
    char bytes[8];
    std::memcpy(bytes, &bits, 8);
    out.write(bytes, 8);
  }
  if (!out) throw IoError("short write to " + path.string());
}

std::vector<double> read_f64(const fs::path& path) {
  auto in = open_in(path, true);
  std::vector<char> raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (raw.size() % 8 != 0) throw IoError(path.string() + ": size is not a multiple of 8 bytes");
  std::vector<double> v(raw.size() / 8);
  for (std::size_t i = 0; i < v.size(); ++i) {
    std::uint64_t bits;
    std::memcpy(&bits, raw.data() + 8 * i, 8);
    if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap64(bits);
    v[i] = std::bit_cast<double>(bits);
  }
  return v;
}

FieldFile read_field(const fs::path& path) {
  const json j = read_json(path);
  FieldFile ff;
  try {
    if (j.contains("grid")) ff.grid = json_grid(j.at("grid"));
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "sampled") {
      if (!ff.grid) throw IoError("sampled field needs a grid");
      const fs::path values = path.parent_path() / j.at("values_file").get<std::string>();
      const auto v = read_f64(values);
      if (v.size() != ff.grid->num_nodes()) {
        throw IoError(values.string() + ": expected " + std::to_string(ff.grid->num_nodes()) +
                      " values, found " + std::to_string(v.size()));
      }
      ff.field = medium::RefractiveField::from_samples(*ff.grid, v, j.value("vacuum_extension", true));
      return ff;
    }
    medium::PhantomSpec spec;
    spec.kind = medium::phantom_kind_from_string(kind);
    if (j.contains("center")) spec.center = json_vec(j.at("center"));
    spec.epsilon = j.value("epsilon", spec.epsilon);
    spec.sigma = j.value("sigma", spec.sigma);
    spec.support_radius = j.value("support_radius", spec.support_radius);
    ff.phantom = spec;
    ff.field = medium::RefractiveField::phantom(spec);
  } catch (const json::exception& e) {
    throw IoError(path.string() + ": " + e.what());
  }
  return ff;
}

void write_phantom(const fs::path& path, const medium::PhantomSpec& spec,
                   const std::optional<GridSpec>& grid) {
  json j = {{"kind", medium::to_string(spec.kind)},
            {"center", vec_json(spec.center)},
            {"epsilon", spec.epsilon},
            {"sigma", spec.sigma},
            {"support_radius", spec.support_radius}};
  if (grid) j["grid"] = grid_json(*grid);
  write_json(path, j);
}

void write_sampled_field(const fs::path& path, const medium::RefractiveField& field,
                         const GridSpec& grid) {
  std::vector<double> v(grid.num_nodes());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = field.evaluate(grid.node(i));
  fs::path sidecar = path;
  sidecar.replace_extension(".f64");
  write_f64(sidecar, v);
  write_json(path, {{"kind", "sampled"},
                    {"grid", grid_json(grid)},
                    {"values_file", sidecar.filename().string()},
                    {"vacuum_extension", true}});
}

void write_table_csv(const fs::path& path, const geodesics::TravelTimeTable& table) {
  auto out = open_out(path);
  out << "src_id,rcv_id,src_xyz,rcv_xyz,tau,residual,failed\n";
  for (const auto& e : table.entries) {
    out << e.src_id << ',' << e.rcv_id << ',' << xyz(e.y) << ',' << xyz(e.x) << ','
        << format_double(e.failed ? std::nan("") : e.tau) << ','
        << format_double(e.failed ? std::nan("") : e.residual) << ',' << (e.failed ? 1 : 0) << '\n';
  }
}

geodesics::TravelTimeTable read_table_csv(const fs::path& path) {
  auto in = open_in(path);
  std::string line;
  if (!std::getline(in, line) || line.rfind("src_id,rcv_id", 0) != 0) {
    throw IoError(path.string() + ": missing travel-time table header");
  }
  geodesics::TravelTimeTable t;
  int row = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto c = split(line, ',');
    if (c.size() != 7) throw IoError(path.string() + ": expected 7 columns in row " + std::to_string(row + 1));
    geodesics::TravelTimeEntry e;
    e.pair_id = row++;
    e.src_id = std::stoi(c[0]);
    e.rcv_id = std::stoi(c[1]);
    e.y = parse_xyz(c[2]);
    e.x = parse_xyz(c[3]);
    e.tau = parse_double(c[4]);
    e.residual = parse_double(c[5]);
    e.failed = c[6] == "1" || !std::isfinite(e.tau);
    e.initial_direction = (e.x - e.y).normalized();
    t.entries.push_back(std::move(e));
  }
  return t;
}

void write_dataset(const fs::path& dir, const forward::Dataset& ds) {
  fs::create_directories(dir / "spectra");
  json pairs = json::array();
  for (const auto& s : ds.spectra) {
    const std::string file = pair_file(s.pair_id);
    {
      auto out = open_out(dir / "spectra" / file);
      out << "k,f\n";
      for (std::size_t i = 0; i < s.f.size(); ++i) {
        out << format_double(s.kgrid.k(i)) << ',' << format_double(s.f[i]) << '\n';
      }
    }
    json p = {{"pair_id", s.pair_id},
              {"src_id", s.src_id},
              {"rcv_id", s.rcv_id},
              {"src", vec_json(s.y)},
              {"rcv", vec_json(s.x)},
              {"file", "spectra/" + file},
              {"remainder_seed", s.provenance.remainder.seed}};
    if (s.provenance.synthetic) {
      const auto& pv = s.provenance;
      p["truth"] = {{"A", pv.A},
                    {"A0", pv.A0},
                    {"alpha", pv.alpha},
                    {"tau", pv.tau},
                    {"dist", pv.dist},
                    {"amplitude_model", forward::to_string(pv.amplitude_model)},
                    {"remainder_bound", pv.remainder_bound}};
    }
    pairs.push_back(std::move(p));
  }
  json gaps = json::array();
  for (const auto& g : ds.gaps) gaps.push_back({{"pair_id", g.pair_id}, {"message", g.message}});
  write_json(dir / "manifest.json",
             {{"seed", ds.seed},
              {"kgrid", {{"k_min", ds.kgrid.k_min}, {"dk", ds.kgrid.dk}, {"count", ds.kgrid.count}}},
              {"remainder", remainder_json(ds.remainder)},
              {"pairs", std::move(pairs)},
              {"gaps", std::move(gaps)},
              {"table", "table.csv"}});
  write_table_csv(dir / "table.csv", ds.table);
}

DatasetFiles read_dataset(const fs::path& dir) {
  const json m = read_json(dir / "manifest.json");
  DatasetFiles d;
  try {
    d.seed = m.at("seed").get<std::uint64_t>();
    const auto& kg = m.at("kgrid");
    d.kgrid.k_min = kg.at("k_min").get<double>();
    d.kgrid.dk = kg.at("dk").get<double>();
    d.kgrid.count = kg.at("count").get<std::size_t>();
    d.kgrid.validate();
    d.remainder = json_remainder(m.at("remainder"));
    for (const auto& g : m.value("gaps", json::array())) {
      d.gaps.push_back({g.at("pair_id").get<int>(), g.at("message").get<std::string>()});
    }
    for (const auto& p : m.at("pairs")) {
      forward::PhaselessSpectrum s;
      s.pair_id = p.at("pair_id").get<int>();
      s.src_id = p.at("src_id").get<int>();
      s.rcv_id = p.at("rcv_id").get<int>();
      s.y = json_vec(p.at("src"));
      s.x = json_vec(p.at("rcv"));
      s.kgrid = d.kgrid;
      s.provenance.remainder = d.remainder;
      s.provenance.remainder.seed = p.value("remainder_seed", std::uint64_t{0});
      if (p.contains("truth")) {
        const auto& t = p.at("truth");
        auto& pv = s.provenance;
        pv.synthetic = true;
        pv.A = t.at("A").get<double>();
        pv.A0 = t.at("A0").get<double>();
        pv.alpha = t.at("alpha").get<double>();
        pv.tau = t.at("tau").get<double>();
        pv.dist = t.at("dist").get<double>();
        pv.amplitude_model = t.value("amplitude_model", "spreading") == "prescribed"
                                 ? forward::LeadingAmplitude::Model::Prescribed
                                 : forward::LeadingAmplitude::Model::Spreading;
        pv.remainder_bound = t.value("remainder_bound", 0.0);
      } else {
        s.provenance.synthetic = false;
      }
      const fs::path file = dir / p.at("file").get<std::string>();
      auto in = open_in(file);
      std::string line;
      std::getline(in, line);
      while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto c = split(line, ',');
        if (c.size() != 2) throw IoError(file.string() + ": expected columns k,f");
        s.f.push_back(parse_double(c[1]));
      }
      if (s.f.size() != d.kgrid.count) {
        throw IoError(file.string() + ": sample count does not match the manifest k-grid");
      }
      d.spectra.push_back(std::move(s));
    }
  } catch (const json::exception& e) {
    throw IoError((dir / "manifest.json").string() + ": " + e.what());
  }
  return d;
}

void write_recovery_report(const fs::path& path,
                           std::span<const recovery::TravelTimeEstimate> estimates,
                           std::span<const forward::PhaselessSpectrum> spectra) {
  if (estimates.size() != spectra.size()) throw PreconditionError("report: size mismatch");
  bool truth = !spectra.empty();
  for (const auto& s : spectra) truth = truth && s.provenance.synthetic;
  auto out = open_out(path);
  out << "pair_id,zero_alpha,A_hat,alpha_hat,tau_hat,zero_count,fit_residual,error_code";
  if (truth) out << ",tau_true,tau_rel_error";
  out << '\n';
  for (std::size_t i = 0; i < estimates.size(); ++i) {
    const auto& e = estimates[i];
    const bool ok = e.ok();
    out << e.pair_id << ',' << (e.zero_alpha ? 1 : 0) << ',' << format_double(e.A_hat) << ','
        << format_double(ok ? e.alpha_hat : std::nan("")) << ','
        << format_double(ok ? e.tau_hat : std::nan("")) << ',' << e.zero_count << ','
        << format_double(e.fit_residual) << ',' << recovery::to_string(e.code);
    if (truth) {
      const double t = spectra[i].provenance.tau;
      out << ',' << format_double(t) << ','
          << format_double(ok ? std::abs(e.tau_hat - t) / t : std::nan(""));
    }
    out << '\n';
  }
}

geodesics::TravelTimeTable recovered_table(std::span<const recovery::TravelTimeEstimate> estimates,
                                           std::span<const forward::PhaselessSpectrum> spectra) {
  if (estimates.size() != spectra.size()) throw PreconditionError("recovered table: size mismatch");
  geodesics::TravelTimeTable t;
  for (std::size_t i = 0; i < estimates.size(); ++i) {
    const auto& e = estimates[i];
    const auto& s = spectra[i];
    geodesics::TravelTimeEntry te;
    te.pair_id = s.pair_id;
    te.src_id = s.src_id;
    te.rcv_id = s.rcv_id;
    te.y = s.y;
    te.x = s.x;
    te.initial_direction = (s.x - s.y).normalized();
    if (e.ok()) {
      te.tau = e.tau_hat;
      te.residual = 0.0;
    } else {
      te.failed = true;
      te.tau = std::nan("");
      te.residual = std::nan("");
      te.message = e.message;
    }
    t.entries.push_back(std::move(te));
  }
  return t;
}

void write_diagnostics(const fs::path& dir, const forward::PhaselessSpectrum& spec,
                       const recovery::TravelTimeEstimate& est,
                       const recovery::ZeroOptions& zero_opts) {
  const double A0 = forward::IncidentAmplitude::at_distance(spec.dist()).value;
  std::vector<double> g;
  std::vector<double> zeros;
  if (est.A_hat > 0.0 && std::isfinite(est.A_hat)) {
    const auto osc = recovery::OscillationFunction::from_spectrum(spec, est.A_hat, A0);
    g = osc.g;
    if (!est.zero_alpha) {
      try {
        zeros = recovery::find_zeros(osc, zero_opts).k;
      } catch (const Error&) {
      }
    }
  }
  char stem[32];
  std::snprintf(stem, sizeof stem, "pair_%05d", spec.pair_id);
  {
    auto out = open_out(dir / (std::string(stem) + ".csv"));
    out << "k,f,g\n";
    for (std::size_t i = 0; i < spec.f.size(); ++i) {
      out << format_double(spec.kgrid.k(i)) << ',' << format_double(spec.f[i]) << ','
          << format_double(g.empty() ? std::nan("") : g[i]) << '\n';
    }
  }
  auto out = open_out(dir / (std::string(stem) + "_zeros.csv"));
  out << "n,k\n";
  for (std::size_t i = 0; i < zeros.size(); ++i) out << i << ',' << format_double(zeros[i]) << '\n';
}

void write_model(const fs::path& dir, const tomography::TomographyModel& model) {
  fs::create_directories(dir);
  const auto values = model.node_values();
  write_f64(dir / "model_values.f64", values);
  write_f64(dir / "model_deviations.f64", model.deviations());
  write_json(dir / "model.json",
             {{"grid", grid_json(model.grid())},
              {"omega", {{"center", vec_json(model.omega().center)}, {"radius", model.omega().radius}}},
              {"free_nodes", model.free_nodes().size()},
              {"values_file", "model_values.f64"},
              {"deviations_file", "model_deviations.f64"},
              {"layout", "row-major (i, j, k), k fastest; float64 little-endian"}});
}

tomography::TomographyModel read_model(const fs::path& json_path) {
  const json j = read_json(json_path);
  try {
    const GridSpec g = json_grid(j.at("grid"));
    const Ball omega{json_vec(j.at("omega").at("center")), j.at("omega").at("radius").get<double>()};
    tomography::TomographyModel m(g, omega);
    auto dev = read_f64(json_path.parent_path() / j.at("deviations_file").get<std::string>());
    if (dev.size() != g.num_nodes()) throw IoError("model deviations: wrong length");
    m.set_deviations(std::move(dev));
    return m;
  } catch (const json::exception& e) {
    throw IoError(json_path.string() + ": " + e.what());
  }
}

void write_history_csv(const fs::path& path,
                       std::span<const tomography::IterationRecord> history) {
  auto out = open_out(path);
  out << "iter,misfit,update_norm,reg_weight\n";
  for (const auto& h : history) {
    out << h.iter << ',' << format_double(h.misfit) << ',' << format_double(h.update_norm) << ','
        << format_double(h.reg_weight) << '\n';
  }
}

}  // namespace phaseless::io
