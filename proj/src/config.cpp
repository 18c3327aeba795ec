#include <blochpack/config.hpp>
#include <blochpack/errors.hpp>

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace bloch {

using nlohmann::json;

namespace {

// ---------------------------------------------------------------------------
// typed JSON access with key-path diagnostics

[[noreturn]] void fail(const std::string& path, const std::string& what) {
    throw ConfigError("config key '" + path + "': " + what);
}

void require_known_keys(const json& obj, const std::string& path,
                        const std::set<std::string>& allowed) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        if (!allowed.count(it.key()))
            throw ConfigError("unknown config key '" +
                              (path.empty() ? it.key() : path + "." + it.key()) + "'");
    }
}

double as_number(const json& v, const std::string& path) {
    if (!v.is_number()) fail(path, "expected a number");
    return v.get<double>();
}

int as_int(const json& v, const std::string& path) {
    if (!v.is_number_integer()) fail(path, "expected an integer");
    return v.get<int>();
}

std::string as_string(const json& v, const std::string& path) {
    if (!v.is_string()) fail(path, "expected a string");
    return v.get<std::string>();
}

std::vector<double> as_number_list(const json& v, const std::string& path) {
    if (!v.is_array()) fail(path, "expected an array of numbers");
    std::vector<double> out;
    for (const auto& e : v) {
        if (!e.is_number()) fail(path, "expected an array of numbers");
        out.push_back(e.get<double>());
    }
    return out;
}

Vec as_vector(const json& v, const std::string& path) {
    auto list = as_number_list(v, path);
    Vec out(static_cast<int>(list.size()));
    for (std::size_t i = 0; i < list.size(); ++i) out[static_cast<int>(i)] = list[i];
    return out;
}

Mat as_matrix(const json& v, const std::string& path) {
    if (!v.is_array() || v.empty()) fail(path, "expected an array of row arrays");
    const std::size_t cols = v.front().is_array() ? v.front().size() : 0;
    if (cols == 0) fail(path, "expected an array of row arrays");
    Mat out(static_cast<int>(v.size()), static_cast<int>(cols));
    int r = 0;
    for (const auto& row : v) {
        auto list = as_number_list(row, path);
        if (list.size() != cols) fail(path, "rows have unequal lengths");
        for (std::size_t c = 0; c < cols; ++c) out(r, static_cast<int>(c)) = list[c];
        ++r;
    }
    return out;
}

CMat as_complex_matrix(const json& v, const std::string& path) {
    if (!v.is_object()) fail(path, "expected an object with 're' and 'im' matrices");
    require_known_keys(v, path, {"re", "im"});
    if (!v.contains("re")) fail(path, "missing 're'");
    Mat re = as_matrix(v.at("re"), path + ".re");
    Mat im = Mat::Zero(re.rows(), re.cols());
    if (v.contains("im")) {
        im = as_matrix(v.at("im"), path + ".im");
        if (im.rows() != re.rows() || im.cols() != re.cols())
            fail(path, "'re' and 'im' shapes differ");
    }
    return re.cast<cplx>() + cplx(0.0, 1.0) * im.cast<cplx>();
}

// ---------------------------------------------------------------------------
// section readers (leaf-merge: only keys present override the base config)

void read_lattice(const json& v, ExperimentConfig& c) {
    require_known_keys(v, "lattice", {"dim", "a", "generators"});
    if (v.contains("dim")) c.dim = as_int(v.at("dim"), "lattice.dim");
    if (v.contains("a") && v.contains("generators"))
        throw ConfigError("config key 'lattice': give either 'a' or 'generators', not both");
    if (v.contains("a")) {
        const double a = as_number(v.at("a"), "lattice.a");
        c.lattice_generators = a * Mat::Identity(c.dim, c.dim);
    }
    if (v.contains("generators")) {
        // inner arrays are the generator column vectors
        Mat g = as_matrix(v.at("generators"), "lattice.generators").transpose();
        c.lattice_generators = g;
    }
}

void read_potential(const json& v, ExperimentConfig& c) {
    require_known_keys(v, "potential", {"type", "amplitude", "coefficients"});
    const std::string type =
        v.contains("type") ? as_string(v.at("type"), "potential.type") : "fourier";
    if (type == "none") {
        c.v_coefficients.clear();
    } else if (type == "single_cosine") {
        if (!v.contains("amplitude")) fail("potential.amplitude", "required for single_cosine");
        const double amp = as_number(v.at("amplitude"), "potential.amplitude");
        IVec m = IVec::Zero(c.dim);
        m[0] = 1;
        c.v_coefficients = {{m, 0.5 * amp}, {-m, 0.5 * amp}};
    } else if (type == "fourier") {
        if (!v.contains("coefficients"))
            fail("potential.coefficients", "required for type 'fourier'");
        c.v_coefficients.clear();
        int idx = 0;
        for (const auto& e : v.at("coefficients")) {
            const std::string path = "potential.coefficients[" + std::to_string(idx++) + "]";
            if (!e.is_object()) fail(path, "expected an object");
            require_known_keys(e, path, {"m", "re", "im"});
            if (!e.contains("m")) fail(path + ".m", "required");
            auto ml = as_number_list(e.at("m"), path + ".m");
            IVec m(static_cast<int>(ml.size()));
            for (std::size_t i = 0; i < ml.size(); ++i) {
                if (ml[i] != std::floor(ml[i])) fail(path + ".m", "expected integers");
                m[static_cast<int>(i)] = static_cast<int>(ml[i]);
            }
            const double re = e.contains("re") ? as_number(e.at("re"), path + ".re") : 0.0;
            const double im = e.contains("im") ? as_number(e.at("im"), path + ".im") : 0.0;
            c.v_coefficients.push_back({m, cplx(re, im)});
        }
    } else {
        fail("potential.type", "unknown type '" + type + "'");
    }
}

void read_external(const json& v, ExperimentConfig& c) {
    require_known_keys(v, "external",
                       {"type", "c0", "g", "H", "kappa", "k", "phi", "depth", "x0", "sigma"});
    if (!v.contains("type")) fail("external.type", "required");
    const std::string type = as_string(v.at("type"), "external.type");
    if (type == "zero") {
        c.external = ExternalPotential::zero(c.dim);
    } else if (type == "quadratic") {
        const double c0 = v.contains("c0") ? as_number(v.at("c0"), "external.c0") : 0.0;
        Vec g = v.contains("g") ? as_vector(v.at("g"), "external.g") : Vec::Zero(c.dim);
        Mat H = v.contains("H") ? as_matrix(v.at("H"), "external.H") : Mat::Zero(c.dim, c.dim);
        c.external = ExternalPotential::quadratic(c0, g, H);
    } else if (type == "cosine_sum") {
        if (!v.contains("kappa") || !v.contains("k"))
            fail("external", "cosine_sum needs 'kappa' and 'k'");
        auto kappa = as_number_list(v.at("kappa"), "external.kappa");
        std::vector<Vec> k;
        for (const auto& row : v.at("k")) k.push_back(as_vector(row, "external.k"));
        std::vector<double> phi(kappa.size(), 0.0);
        if (v.contains("phi")) phi = as_number_list(v.at("phi"), "external.phi");
        c.external = ExternalPotential::cosine_sum(kappa, k, phi);
    } else if (type == "gaussian_well") {
        if (!v.contains("depth") || !v.contains("x0") || !v.contains("sigma"))
            fail("external", "gaussian_well needs 'depth', 'x0', 'sigma'");
        c.external = ExternalPotential::gaussian_well(as_number(v.at("depth"), "external.depth"),
                                                      as_vector(v.at("x0"), "external.x0"),
                                                      as_number(v.at("sigma"), "external.sigma"));
    } else {
        fail("external.type", "unknown type '" + type + "'");
    }
}

void read_envelope(const json& v, ExperimentConfig& c) {
    require_known_keys(v, "envelope", {"A0", "B0"});
    if (v.contains("A0")) c.A0 = as_complex_matrix(v.at("A0"), "envelope.A0");
    if (v.contains("B0")) c.B0 = as_complex_matrix(v.at("B0"), "envelope.B0");
}

void read_steppers(const json& v, ExperimentConfig& c) {
    require_known_keys(v, "steppers", {"ode_dt", "envelope_dt", "field_dt_factor"});
    if (v.contains("ode_dt")) c.ode_dt = as_number(v.at("ode_dt"), "steppers.ode_dt");
    if (v.contains("envelope_dt"))
        c.envelope_dt = as_number(v.at("envelope_dt"), "steppers.envelope_dt");
    if (v.contains("field_dt_factor"))
        c.field_dt_factor = as_number(v.at("field_dt_factor"), "steppers.field_dt_factor");
}

void read_grid(const json& v, ExperimentConfig& c) {
    require_known_keys(v, "grid", {"points", "box_length", "box_center"});
    if (v.contains("points")) {
        c.grid_points.clear();
        for (const auto& e : v.at("points")) c.grid_points.push_back(as_int(e, "grid.points"));
    }
    if (v.contains("box_length")) c.box_length = as_vector(v.at("box_length"), "grid.box_length");
    if (v.contains("box_center")) c.box_center = as_vector(v.at("box_center"), "grid.box_center");
}

json complex_matrix_json(const CMat& m) {
    json re = json::array(), im = json::array();
    for (int r = 0; r < m.rows(); ++r) {
        json rr = json::array(), ri = json::array();
        for (int cidx = 0; cidx < m.cols(); ++cidx) {
            rr.push_back(m(r, cidx).real());
            ri.push_back(m(r, cidx).imag());
        }
        re.push_back(rr);
        im.push_back(ri);
    }
    return json{{"re", re}, {"im", im}};
}

json vector_json(const Vec& v) {
    json out = json::array();
    for (int i = 0; i < v.size(); ++i) out.push_back(v[i]);
    return out;
}

}  // namespace

// ---------------------------------------------------------------------------

LatticeSpec ExperimentConfig::lattice() const { return LatticeSpec::from_direct(lattice_generators); }

PeriodicPotential ExperimentConfig::potential() const {
    return PeriodicPotential(lattice(), v_coefficients);
}

GaussianEnvelope ExperimentConfig::envelope() const {
    // normalize: |N|^2 integral exp(-y . Im(M) y) = |N|^2 pi^{d/2} / sqrt(det Im M)
    const CMat M = B0 * A0.inverse();
    const Mat imM = M.imag();
    const double det = imM.determinant();
    if (!(det > 0.0)) throw ConfigError("envelope pair gives a non-decaying Gaussian");
    const double N = std::pow(kPi, -0.25 * dim) * std::pow(det, 0.25);
    return make_gaussian(N, A0, B0);
}

BandOptions ExperimentConfig::band_options() const {
    BandOptions opt;
    opt.band = band;
    opt.gap_threshold = gap_threshold;
    opt.gauge = gauge;
    return opt;
}

int ExperimentConfig::points_for(std::size_t eps_index) const {
    // no grid configured: the sweep runs without the direct-solve comparison
    if (grid_points.empty()) return 0;
    if (grid_points.size() == 1) return grid_points[0];
    return grid_points.at(eps_index);
}

double ExperimentConfig::eps_min() const {
    double m = 1.0;
    for (double e : epsilon) m = std::min(m, e);
    return m;
}

void validate_config(const ExperimentConfig& c) {
    if (c.dim < 1 || c.dim > 3) throw ConfigError("lattice.dim must be 1, 2, or 3");
    if (c.lattice_generators.rows() != c.dim || c.lattice_generators.cols() != c.dim)
        throw ConfigError("lattice generators must form a dim x dim matrix");
    if (!(c.cutoff > 0.0)) throw ConfigError("cutoff must be positive");
    if (c.band < 1) throw ConfigError("band index is 1-based and must be >= 1");
    if (!(c.gap_threshold > 0.0)) throw ConfigError("gap_threshold must be positive");
    if (c.q0.size() != c.dim || c.p0.size() != c.dim)
        throw ConfigError("q0 and p0 must have 'dim' entries");
    if (c.external.dim() != c.dim)
        throw ConfigError("external potential dimension does not match the lattice");
    if (c.A0.rows() != c.dim || c.A0.cols() != c.dim || c.B0.rows() != c.dim ||
        c.B0.cols() != c.dim)
        throw ConfigError("envelope.A0 and envelope.B0 must be dim x dim");
    try {
        (void)c.lattice();
        (void)c.potential();
        (void)c.envelope();
    } catch (const ConfigError&) {
        throw;
    } catch (const Error& e) {
        throw ConfigError(std::string("config rejected: ") + e.what());
    }

    for (double e : c.epsilon)
        if (!(e > 0.0) || e > 0.25)
            throw ConfigError("epsilon values must lie in (0, 1/4]; the two-scale ansatz "
                              "degrades above that");
    if (!(c.horizon > 0.0)) throw ConfigError("horizon must be positive");
    if (!c.epsilon.empty()) {
        const double cap = c.ehrenfest_factor * std::log(1.0 / c.eps_min());
        if (c.horizon > cap + 1e-12) {
            std::ostringstream msg;
            msg << "horizon " << c.horizon << " exceeds the wavepacket validity window "
                << c.ehrenfest_factor << " * ln(1/eps_min) = " << cap;
            throw ConfigError(msg.str());
        }
    }
    for (std::size_t i = 0; i < c.checkpoints.size(); ++i) {
        const double t = c.checkpoints[i];
        if (!(t > 0.0) || t > c.horizon + 1e-12)
            throw ConfigError("checkpoints must lie in (0, horizon]");
        if (i > 0 && t <= c.checkpoints[i - 1])
            throw ConfigError("checkpoints must increase strictly");
    }
    if (!(c.ode_dt > 0.0) || !(c.envelope_dt > 0.0) || !(c.field_dt_factor > 0.0))
        throw ConfigError("stepper sizes must be positive");
    if (!c.grid_points.empty() && c.grid_points.size() != 1 &&
        c.grid_points.size() != c.epsilon.size())
        throw ConfigError("grid.points must have one entry or one per epsilon");
    for (int n : c.grid_points)
        if (n < 8) throw ConfigError("grid.points entries must be >= 8");
    if (c.box_length.size() != c.box_center.size())
        throw ConfigError("grid.box_length and grid.box_center must be given together");
    if (c.box_length.size() != 0 && c.box_length.size() != c.dim)
        throw ConfigError("grid box must have 'dim' entries");
    for (int i = 0; i < c.box_length.size(); ++i)
        if (!(c.box_length[i] > 0.0)) throw ConfigError("grid.box_length must be positive");
    if (c.geometry_grid < 4) throw ConfigError("geometry_grid must be >= 4");
    if (c.workers < 0) throw ConfigError("workers must be >= 0");
}

ExperimentConfig parse_config_text(const std::string& text) {
    json root;
    try {
        root = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    if (!root.is_object()) throw ConfigError("config root must be a JSON object");

    require_known_keys(root, "",
                       {"scenario", "name", "lattice", "potential", "cutoff", "external", "band",
                        "gap_threshold", "gauge", "q0", "p0", "envelope", "epsilon", "horizon",
                        "ehrenfest_factor", "checkpoints", "steppers", "grid", "geometry_grid",
                        "workers", "out_dir", "seed"});

    ExperimentConfig c;
    if (root.contains("scenario")) {
        c = named_scenario(as_string(root.at("scenario"), "scenario"));
    } else {
        c.lattice_generators = Mat::Identity(1, 1);
        c.q0 = Vec::Zero(1);
        c.p0 = Vec::Zero(1);
        c.A0 = CMat::Identity(1, 1);
        c.B0 = cplx(0.0, 1.0) * CMat::Identity(1, 1);
    }

    if (root.contains("name")) c.name = as_string(root.at("name"), "name");
    if (root.contains("lattice")) {
        const int old_dim = c.dim;
        read_lattice(root.at("lattice"), c);
        if (c.dim != old_dim && !root.contains("scenario")) {
            // fresh config changing dimension: re-seed the dimension-dependent defaults
            c.lattice_generators = c.lattice_generators.rows() == c.dim
                                       ? c.lattice_generators
                                       : Mat::Identity(c.dim, c.dim);
            c.q0 = Vec::Zero(c.dim);
            c.p0 = Vec::Zero(c.dim);
            c.A0 = CMat::Identity(c.dim, c.dim);
            c.B0 = cplx(0.0, 1.0) * CMat::Identity(c.dim, c.dim);
            c.external = ExternalPotential::zero(c.dim);
        }
    }
    if (root.contains("potential")) read_potential(root.at("potential"), c);
    if (root.contains("cutoff")) c.cutoff = as_number(root.at("cutoff"), "cutoff");
    if (root.contains("external")) read_external(root.at("external"), c);
    if (root.contains("band")) c.band = as_int(root.at("band"), "band");
    if (root.contains("gap_threshold"))
        c.gap_threshold = as_number(root.at("gap_threshold"), "gap_threshold");
    if (root.contains("gauge")) {
        const std::string g = as_string(root.at("gauge"), "gauge");
        if (g == "reference")
            c.gauge = Gauge::reference;
        else if (g == "zero_mode")
            c.gauge = Gauge::zero_mode;
        else
            fail("gauge", "expected 'reference' or 'zero_mode'");
    }
    if (root.contains("q0")) c.q0 = as_vector(root.at("q0"), "q0");
    if (root.contains("p0")) c.p0 = as_vector(root.at("p0"), "p0");
    if (root.contains("envelope")) read_envelope(root.at("envelope"), c);
    if (root.contains("epsilon")) c.epsilon = as_number_list(root.at("epsilon"), "epsilon");
    if (root.contains("horizon")) c.horizon = as_number(root.at("horizon"), "horizon");
    if (root.contains("ehrenfest_factor"))
        c.ehrenfest_factor = as_number(root.at("ehrenfest_factor"), "ehrenfest_factor");
    if (root.contains("checkpoints"))
        c.checkpoints = as_number_list(root.at("checkpoints"), "checkpoints");
    if (root.contains("steppers")) read_steppers(root.at("steppers"), c);
    if (root.contains("grid")) read_grid(root.at("grid"), c);
    if (root.contains("geometry_grid"))
        c.geometry_grid = as_int(root.at("geometry_grid"), "geometry_grid");
    if (root.contains("workers")) c.workers = as_int(root.at("workers"), "workers");
    if (root.contains("out_dir")) c.out_dir = as_string(root.at("out_dir"), "out_dir");
    if (root.contains("seed")) c.seed = root.at("seed").get<unsigned long>();

    validate_config(c);
    return c;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_config_text(buf.str());
}

std::string resolved_config_json(const ExperimentConfig& c) {
    json root;
    root["name"] = c.name;
    json gens = json::array();
    for (int col = 0; col < c.lattice_generators.cols(); ++col)
        gens.push_back(vector_json(c.lattice_generators.col(col)));
    root["lattice"] = json{{"dim", c.dim}, {"generators", gens}};
    json coeffs = json::array();
    for (const auto& [m, v] : c.v_coefficients) {
        json mm = json::array();
        for (int i = 0; i < m.size(); ++i) mm.push_back(m[i]);
        coeffs.push_back(json{{"m", mm}, {"re", v.real()}, {"im", v.imag()}});
    }
    root["potential"] = json{{"type", "fourier"}, {"coefficients", coeffs}};
    root["cutoff"] = c.cutoff;
    switch (c.external.kind()) {
        case ExternalPotential::Kind::zero:
            root["external"] = json{{"type", "zero"}};
            break;
        case ExternalPotential::Kind::quadratic: {
            json H = json::array();
            const Mat& hess = c.external.quadratic_form();
            for (int r = 0; r < hess.rows(); ++r)
                H.push_back(vector_json(Vec(hess.row(r).transpose())));
            root["external"] = json{{"type", "quadratic"},
                                    {"c0", c.external.constant()},
                                    {"g", vector_json(c.external.linear())},
                                    {"H", H}};
            break;
        }
        case ExternalPotential::Kind::cosine_sum: {
            json k = json::array();
            for (const Vec& kv : c.external.wave_vectors()) k.push_back(vector_json(kv));
            root["external"] = json{{"type", "cosine_sum"},
                                    {"kappa", c.external.kappa()},
                                    {"k", k},
                                    {"phi", c.external.phases()}};
            break;
        }
        case ExternalPotential::Kind::gaussian_well:
            root["external"] = json{{"type", "gaussian_well"},
                                    {"depth", c.external.depth()},
                                    {"x0", vector_json(c.external.well_center())},
                                    {"sigma", c.external.width()}};
            break;
    }
    root["band"] = c.band;
    root["gap_threshold"] = c.gap_threshold;
    root["gauge"] = c.gauge == Gauge::zero_mode ? "zero_mode" : "reference";
    root["q0"] = vector_json(c.q0);
    root["p0"] = vector_json(c.p0);
    root["envelope"] = json{{"A0", complex_matrix_json(c.A0)}, {"B0", complex_matrix_json(c.B0)}};
    root["epsilon"] = c.epsilon;
    root["horizon"] = c.horizon;
    root["ehrenfest_factor"] = c.ehrenfest_factor;
    root["checkpoints"] = c.checkpoints;
    root["steppers"] = json{{"ode_dt", c.ode_dt},
                            {"envelope_dt", c.envelope_dt},
                            {"field_dt_factor", c.field_dt_factor}};
    root["grid"] = json{{"points", c.grid_points},
                        {"box_length", vector_json(c.box_length)},
                        {"box_center", vector_json(c.box_center)}};
    root["geometry_grid"] = c.geometry_grid;
    root["workers"] = c.workers;
    root["out_dir"] = c.out_dir;
    root["seed"] = c.seed;
    return root.dump(2);
}

void apply_overrides(ExperimentConfig& c, const ConfigOverrides& o) {
    if (o.out_dir) c.out_dir = *o.out_dir;
    if (o.workers) c.workers = *o.workers;
    if (o.dt) {
        c.ode_dt = *o.dt;
        c.envelope_dt = *o.dt;
    }
    if (o.epsilon) {
        c.epsilon = *o.epsilon;
        if (c.grid_points.size() > 1) {
            // a per-epsilon grid list no longer lines up; keep the densest grid
            int densest = 0;
            for (int n : c.grid_points) densest = std::max(densest, n);
            c.grid_points = {densest};
        }
    }
    validate_config(c);
}

}  // namespace bloch
