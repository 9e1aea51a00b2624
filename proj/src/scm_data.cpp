#include "disco/scm_data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <numbers>
#include <sstream>

namespace disco {
namespace {

constexpr std::size_t kBlobResolution = 32;
constexpr std::size_t kDspritesResolution = 64;
constexpr double kBlobSigmaPx = 3.0;

double lookup(const std::vector<std::pair<std::string, double>>& fields,
              const std::string& name) {
    for (const auto& [k, v] : fields) {
        if (k == name) return v;
    }
    throw InputError("unknown field: " + name);
}

struct Overrides {
    const std::vector<std::pair<std::string, double>>* values = nullptr;

    bool has(const std::string& name) const {
        if (values == nullptr) return false;
        for (const auto& [k, v] : *values) {
            if (k == name) return true;
        }
        return false;
    }
    double get(const std::string& name, double fallback) const {
        if (values != nullptr) {
            for (const auto& [k, v] : *values) {
                if (k == name) return v;
            }
        }
        return fallback;
    }
};

// ---- rasterizers -----------------------------------------------------------

std::vector<double> render_blob(const DatasetSpec& spec, double ci, double bi,
                                double eps_causal) {
    const std::size_t res = spec.resolution > 0 ? spec.resolution : kBlobResolution;
    const double c1 = static_cast<double>(res) * 0.25;
    const double c2 = static_cast<double>(res) * 0.75;
    const double i1 = std::exp(ci + eps_causal);
    const double i2 = std::exp(bi);
    const double inv = 1.0 / (2.0 * kBlobSigmaPx * kBlobSigmaPx);
    std::vector<double> img(res * res);
    for (std::size_t r = 0; r < res; ++r) {
        for (std::size_t c = 0; c < res; ++c) {
            const double y = static_cast<double>(r) + 0.5;
            const double x = static_cast<double>(c) + 0.5;
            const double d1 = (y - c1) * (y - c1) + (x - c1) * (x - c1);
            const double d2 = (y - c2) * (y - c2) + (x - c2) * (x - c2);
            img[r * res + c] = i1 * std::exp(-d1 * inv) + i2 * std::exp(-d2 * inv);
        }
    }
    return img;
}

// Heart outline on roughly [-1, 1]^2 from the classic parametric curve.
const std::vector<std::pair<double, double>>& heart_polygon() {
    static const std::vector<std::pair<double, double>> poly = [] {
        std::vector<std::pair<double, double>> p;
        const int m = 48;
        for (int i = 0; i < m; ++i) {
            const double t = 2.0 * std::numbers::pi * i / m;
            const double x = 16.0 * std::pow(std::sin(t), 3.0);
            const double y = 13.0 * std::cos(t) - 5.0 * std::cos(2 * t) -
                             2.0 * std::cos(3 * t) - std::cos(4 * t);
            p.emplace_back(x / 17.0, y / 17.0);
        }
        return p;
    }();
    return poly;
}

bool point_in_polygon(double x, double y, const std::vector<std::pair<double, double>>& poly) {
    bool in = false;
    for (std::size_t i = 0, j = poly.size() - 1; i < poly.size(); j = i++) {
        const auto [xi, yi] = poly[i];
        const auto [xj, yj] = poly[j];
        if ((yi > y) != (yj > y) && x < (xj - xi) * (y - yi) / (yj - yi) + xi) in = !in;
    }
    return in;
}

// shape: 0 square, 1 ellipse, 2 heart. Position in [0,1]^2 with v measured
// upward; anti-aliased by 2x2 supersampling.
std::vector<double> render_shape(std::size_t res, double px, double pv, double half_px,
                                 double orientation_deg, int shape) {
    const double margin = 8.0;
    const double usable = static_cast<double>(res) - 1.0 - 2.0 * margin;
    const double cx = margin + std::clamp(px, 0.0, 1.0) * usable;
    const double cy = margin + (1.0 - std::clamp(pv, 0.0, 1.0)) * usable;
    const double th = orientation_deg * std::numbers::pi / 180.0;
    const double ct = std::cos(th);
    const double st = std::sin(th);
    std::vector<double> img(res * res, 0.0);
    const double reach = half_px * 1.6 + 1.0;
    const std::size_t r0 = static_cast<std::size_t>(std::max(0.0, cy - reach));
    const std::size_t r1 = std::min(res - 1, static_cast<std::size_t>(std::max(0.0, cy + reach)));
    const std::size_t c0 = static_cast<std::size_t>(std::max(0.0, cx - reach));
    const std::size_t c1 = std::min(res - 1, static_cast<std::size_t>(std::max(0.0, cx + reach)));
    for (std::size_t r = r0; r <= r1; ++r) {
        for (std::size_t c = c0; c <= c1; ++c) {
            double cover = 0.0;
            for (int sy = 0; sy < 2; ++sy) {
                for (int sx = 0; sx < 2; ++sx) {
                    const double y = static_cast<double>(r) + 0.25 + 0.5 * sy - cy;
                    const double x = static_cast<double>(c) + 0.25 + 0.5 * sx - cx;
                    // rotate into the shape frame (screen y points down)
                    const double u = (ct * x - st * y) / half_px;
                    const double v = (st * x + ct * y) / half_px;
                    bool inside = false;
                    if (shape == 0) {
                        inside = std::abs(u) <= 1.0 && std::abs(v) <= 1.0;
                    } else if (shape == 1) {
                        inside = u * u + (v / 0.62) * (v / 0.62) <= 1.0;
                    } else {
                        inside = point_in_polygon(u, v, heart_polygon());
                    }
                    if (inside) cover += 0.25;
                }
            }
            img[r * res + c] = cover;
        }
    }
    return img;
}

// ---- family mechanisms -------------------------------------------------------

using Fields = std::vector<std::pair<std::string, double>>;

Fields blob_mechanisms(const DatasetSpec& spec, const Fields& exo, const Overrides& ov) {
    const double ci = ov.get("CI", lookup(exo, "u_causal"));
    double bi;
    if (ov.has("BI")) {
        bi = ov.get("BI", 0.0);
    } else if (spec.bias_mode == BiasMode::biased) {
        bi = ci + lookup(exo, "u_bias");
    } else {
        bi = lookup(exo, "u_indep") + lookup(exo, "u_bias");
    }
    return {{"CI", ci}, {"BI", bi}};
}

Fields dsprites_regression_mechanisms(const DatasetSpec& spec, const Fields& exo,
                                      const Overrides& ov) {
    const double sx = std::sin(lookup(exo, "u_x"));
    const double x = ov.get("x", sx);
    double ybase;
    if (spec.bias_mode == BiasMode::biased) {
        ybase = sx * sx;  // x and y share the driver u_x; x is not a parent of y
    } else {
        const double sxp = std::sin(lookup(exo, "u_x_indep"));
        ybase = sxp * sxp;
    }
    const double y = ov.get("y", ybase + lookup(exo, "u_y"));
    const double scl = ov.get("scale", lookup(exo, "u_scale"));
    const double ori = ov.get("orientation", lookup(exo, "u_theta"));
    const double shp = ov.get("shape", lookup(exo, "u_shape"));
    return {{"x", x}, {"y", y}, {"scale", scl}, {"orientation", ori}, {"shape", shp}};
}

Fields dsprites_multibias_mechanisms(const DatasetSpec& spec, const Fields& exo,
                                     const Overrides& ov) {
    const double g = ov.get("G", lookup(exo, "u_g") < 0.5 ? 0.0 : 1.0);
    const double scl = ov.get("scale", 0.5 + 0.1 * g + 0.1 * lookup(exo, "u_scale01"));
    const double label = scl > 0.6 ? 1.0 : 0.0;
    double x, y;
    if (spec.bias_mode == BiasMode::biased) {
        // one shared window bit drives both positions, echoing the tight
        // x/y coupling of the regression variant; neither position is a
        // descendant of the other or of scale
        const bool aligned = lookup(exo, "u_share") < 0.95;
        bool gw = aligned ? g > 0.5 : g < 0.5;
        if (lookup(exo, "u_leak") < 0.02) gw = !gw;
        x = (gw ? 0.55 : 0.05) + 0.40 * lookup(exo, "u_x");
        y = (gw ? 0.55 : 0.05) + 0.40 * lookup(exo, "u_y");
    } else {
        x = 0.05 + 0.90 * lookup(exo, "u_x");
        y = 0.05 + 0.90 * lookup(exo, "u_y");
    }
    x = ov.get("x", x);
    y = ov.get("y", y);
    const double ori = ov.get("orientation", lookup(exo, "u_theta"));
    // fixed square: keeps the size channel decodable by a small dense net
    const double shp = ov.get("shape", 0.0);
    return {{"G", g},  {"scale", scl},       {"label", label}, {"x", x},
            {"y", y},  {"orientation", ori}, {"shape", shp}};
}

Fields yaleb_mechanisms(const DatasetSpec&, const Fields& exo, const Overrides& ov) {
    const double pose = ov.get("pose", lookup(exo, "u_pose"));
    const double az = ov.get("az", lookup(exo, "u_az"));
    const double el = ov.get("el", lookup(exo, "u_el"));
    return {{"pose", pose}, {"az", az}, {"el", el}};
}

Fields fairface_mechanisms(const DatasetSpec&, const Fields& exo, const Overrides& ov) {
    const double y = ov.get("Y", lookup(exo, "u_y") < 0.5 ? 0.0 : 1.0);
    const double b = ov.get("B", lookup(exo, "u_b") < 0.5 ? 0.0 : 1.0);
    return {{"Y", y}, {"B", b}};
}

Fields waterbirds_mechanisms(const DatasetSpec& spec, const Fields& exo, const Overrides& ov) {
    const double bird = ov.get("bird", lookup(exo, "u_bird") < 0.5 ? 0.0 : 1.0);
    double p = 0.5;
    if (spec.bias_mode == BiasMode::biased) p = 0.9 * bird + 0.1 * (1.0 - bird);
    const double bg = ov.get("background", lookup(exo, "u_bg") < p ? 1.0 : 0.0);
    return {{"bird", bird}, {"background", bg}};
}

Fields run_mechanisms(const DatasetSpec& spec, const Fields& exo, const Overrides& ov) {
    switch (spec.family) {
        case Family::blob:
            return blob_mechanisms(spec, exo, ov);
        case Family::dsprites:
            return spec.multibias ? dsprites_multibias_mechanisms(spec, exo, ov)
                                  : dsprites_regression_mechanisms(spec, exo, ov);
        case Family::yaleb_like:
            return yaleb_mechanisms(spec, exo, ov);
        case Family::fairface_like:
            return fairface_mechanisms(spec, exo, ov);
        case Family::waterbirds_discrete:
            return waterbirds_mechanisms(spec, exo, ov);
    }
    throw InputError("unknown family");
}

std::vector<double> run_render(const DatasetSpec& spec, const Fields& endo, const Fields& exo) {
    switch (spec.family) {
        case Family::blob:
            return render_blob(spec, lookup(endo, "CI"), lookup(endo, "BI"),
                               lookup(exo, "eps_causal"));
        case Family::dsprites: {
            const std::size_t res = spec.resolution > 0 ? spec.resolution : kDspritesResolution;
            if (spec.multibias) {
                const double rendered =
                    std::clamp(lookup(endo, "scale") + lookup(exo, "eps_scale"), 0.45, 0.75);
                return render_shape(res, lookup(endo, "x"), lookup(endo, "y"),
                                    rendered * static_cast<double>(res) * 0.18,
                                    lookup(endo, "orientation"),
                                    static_cast<int>(lookup(endo, "shape")));
            }
            const double px = std::clamp(lookup(endo, "x") + lookup(exo, "eps_x"), 0.0, 1.0);
            const double py_raw =
                std::exp(lookup(endo, "y") + lookup(exo, "eps_y1")) + lookup(exo, "eps_y2");
            const double pv = std::clamp((py_raw - 0.5) / 4.0, 0.0, 1.0);
            return render_shape(res, px, pv,
                                lookup(endo, "scale") * static_cast<double>(res) * 0.18,
                                lookup(endo, "orientation"),
                                static_cast<int>(lookup(endo, "shape")));
        }
        case Family::yaleb_like: {
            const double pose = lookup(endo, "pose");
            std::vector<double> f;
            for (int k = 0; k < 3; ++k) {
                f.push_back((static_cast<int>(pose) == k ? 1.0 : 0.0) +
                            spec.feature_noise * lookup(exo, "eps_f" + std::to_string(k)));
            }
            f.push_back(lookup(endo, "az") / 30.0 + spec.feature_noise * lookup(exo, "eps_f3"));
            f.push_back(lookup(endo, "el") / 30.0 + spec.feature_noise * lookup(exo, "eps_f4"));
            for (int k = 5; k < 8; ++k) f.push_back(lookup(exo, "eps_f" + std::to_string(k)));
            return f;
        }
        case Family::fairface_like: {
            std::vector<double> f;
            const double y = lookup(endo, "Y");
            const double b = lookup(endo, "B");
            const double fn = spec.feature_noise;
            f.push_back(y + fn * lookup(exo, "eps_f0"));
            f.push_back(y + fn * lookup(exo, "eps_f1"));
            f.push_back(b + fn * lookup(exo, "eps_f2"));
            f.push_back(b + fn * lookup(exo, "eps_f3"));
            f.push_back(lookup(exo, "eps_f4"));
            f.push_back(lookup(exo, "eps_f5"));
            return f;
        }
        case Family::waterbirds_discrete: {
            std::vector<double> f;
            const double bird = lookup(endo, "bird");
            const double bg = lookup(endo, "background");
            const double fn = spec.feature_noise;
            for (int k = 0; k < 4; ++k) {
                f.push_back(bird + fn * lookup(exo, "eps_f" + std::to_string(k)));
            }
            for (int k = 4; k < 8; ++k) {
                f.push_back(bg + fn * lookup(exo, "eps_f" + std::to_string(k)));
            }
            return f;
        }
    }
    throw InputError("unknown family");
}

Fields draw_exogenous(const DatasetSpec& spec, SplitRng& rng) {
    switch (spec.family) {
        case Family::blob:
            return {{"u_causal", rng.uniform01()},
                    {"u_bias", rng.normal(0.0, 0.1)},
                    {"eps_causal", rng.normal(0.0, 0.1)},
                    {"u_indep", rng.uniform01()}};
        case Family::dsprites: {
            if (spec.multibias) {
                return {{"u_g", rng.uniform01()},
                        {"u_scale01", rng.uniform01()},
                        {"u_share", rng.uniform01()},
                        {"u_leak", rng.uniform01()},
                        {"u_x", rng.uniform01()},
                        {"u_y", rng.uniform01()},
                        {"u_theta", rng.uniform(0.0, 360.0)},
                        {"eps_scale", rng.normal(0.0, 0.05)}};
            }
            return {{"u_x", rng.uniform(0.0, std::numbers::pi / 2.0)},
                    {"u_x_indep", rng.uniform(0.0, std::numbers::pi / 2.0)},
                    {"u_y", rng.normal(0.0, 0.15)},
                    {"u_scale", rng.uniform(0.5, 0.7)},
                    {"u_theta", rng.uniform(0.0, 360.0)},
                    {"u_shape", static_cast<double>(rng.uniform_int(3))},
                    {"eps_x", rng.normal(0.0, 0.01)},
                    {"eps_y1", rng.normal(0.0, 0.1)},
                    {"eps_y2", rng.normal(0.0, 0.2)}};
        }
        case Family::yaleb_like: {
            Fields f{{"u_pose", static_cast<double>(rng.uniform_int(3))},
                     {"u_az", rng.normal(0.0, 30.0)},
                     {"u_el", rng.normal(0.0, 30.0)}};
            for (int k = 0; k < 8; ++k) f.emplace_back("eps_f" + std::to_string(k), rng.normal());
            return f;
        }
        case Family::fairface_like: {
            Fields f{{"u_y", rng.uniform01()}, {"u_b", rng.uniform01()}};
            for (int k = 0; k < 6; ++k) f.emplace_back("eps_f" + std::to_string(k), rng.normal());
            return f;
        }
        case Family::waterbirds_discrete: {
            Fields f{{"u_bird", rng.uniform01()}, {"u_bg", rng.uniform01()}};
            for (int k = 0; k < 8; ++k) f.emplace_back("eps_f" + std::to_string(k), rng.normal());
            return f;
        }
    }
    throw InputError("unknown family");
}

Unit make_unit(const DatasetSpec& spec, Fields exo) {
    Unit u;
    u.exogenous = std::move(exo);
    u.endogenous = run_mechanisms(spec, u.exogenous, Overrides{});
    if (spec.render) u.features = run_render(spec, u.endogenous, u.exogenous);
    return u;
}

struct FamilyInfo {
    Task task;
    std::size_t n_classes;
    std::string target;
    std::vector<std::string> bias;
};

FamilyInfo family_info(const DatasetSpec& spec) {
    switch (spec.family) {
        case Family::blob:
            return {Task::regression, 0, "CI", {"BI"}};
        case Family::dsprites:
            if (spec.multibias) return {Task::classification, 2, "label", {"x", "y"}};
            return {Task::regression, 0, "y", {"x"}};
        case Family::yaleb_like:
            return {Task::classification, 3, "pose", {"az", "el"}};
        case Family::fairface_like:
            return {Task::classification, 2, "Y", {"B"}};
        case Family::waterbirds_discrete:
            return {Task::classification, 2, "bird", {"background"}};
    }
    throw InputError("unknown family");
}

Dataset assemble(const DatasetSpec& spec, std::vector<Unit> units) {
    const FamilyInfo info = family_info(spec);
    Dataset ds;
    ds.spec = spec;
    ds.task = info.task;
    ds.n_classes = info.n_classes;
    ds.target_name = info.target;
    ds.bias_names = info.bias;
    ds.units = std::move(units);
    ds.targets.reserve(ds.units.size());
    for (const Unit& u : ds.units) ds.targets.push_back(u.endo(info.target));
    if (spec.label_noise > 0.0) {
        apply_label_noise(ds, spec.label_noise,
                          SplitRng(spec.seed).split("label_noise").next_u64());
    }
    return ds;
}

std::vector<Unit> draw_units(const DatasetSpec& spec) {
    if (spec.n < 1) throw ConfigError("dataset spec: n must be at least 1");
    if (!(spec.label_noise >= 0.0 && spec.label_noise < 1.0)) {
        throw ConfigError("dataset spec: label_noise must lie in [0, 1)");
    }
    SplitRng rng = SplitRng(spec.seed).split(family_to_string(spec.family));
    std::vector<Unit> units;
    units.reserve(spec.n);
    for (std::size_t i = 0; i < spec.n; ++i) {
        units.push_back(make_unit(spec, draw_exogenous(spec, rng)));
    }
    return units;
}

}  // namespace

Family family_from_string(const std::string& s) {
    if (s == "blob") return Family::blob;
    if (s == "dsprites") return Family::dsprites;
    if (s == "yaleb_like") return Family::yaleb_like;
    if (s == "fairface_like") return Family::fairface_like;
    if (s == "waterbirds_discrete") return Family::waterbirds_discrete;
    throw SchemaError("unknown dataset family: " + s);
}

std::string family_to_string(Family f) {
    switch (f) {
        case Family::blob: return "blob";
        case Family::dsprites: return "dsprites";
        case Family::yaleb_like: return "yaleb_like";
        case Family::fairface_like: return "fairface_like";
        case Family::waterbirds_discrete: return "waterbirds_discrete";
    }
    return "unknown";
}

double Unit::exo(const std::string& name) const { return lookup(exogenous, name); }
double Unit::endo(const std::string& name) const { return lookup(endogenous, name); }

bool Unit::operator==(const Unit& other) const {
    return exogenous == other.exogenous && endogenous == other.endogenous &&
           features == other.features;
}

Matrix Dataset::features() const {
    Matrix out(n(), feature_dim());
    for (std::size_t i = 0; i < n(); ++i) {
        std::copy(units[i].features.begin(), units[i].features.end(),
                  out.data() + i * feature_dim());
    }
    return out;
}

Matrix Dataset::target_column() const {
    Matrix out(n(), 1);
    for (std::size_t i = 0; i < n(); ++i) out.at(i, 0) = targets[i];
    return out;
}

Matrix Dataset::bias_columns() const {
    Matrix out(n(), bias_names.size());
    for (std::size_t i = 0; i < n(); ++i) {
        for (std::size_t j = 0; j < bias_names.size(); ++j) {
            out.at(i, j) = units[i].endo(bias_names[j]);
        }
    }
    return out;
}

Dataset blob_sample(const DatasetSpec& spec) {
    if (spec.family != Family::blob) throw ConfigError("blob_sample: wrong family tag");
    return assemble(spec, draw_units(spec));
}

Dataset dsprites_sample(const DatasetSpec& spec) {
    if (spec.family != Family::dsprites) throw ConfigError("dsprites_sample: wrong family tag");
    return assemble(spec, draw_units(spec));
}

Dataset yaleb_like_sample(const DatasetSpec& spec) {
    if (spec.family != Family::yaleb_like) throw ConfigError("yaleb_like_sample: wrong family");
    std::vector<Unit> units = draw_units(spec);
    if (spec.bias_mode == BiasMode::biased) {
        const auto keep = selection_bias_filter(units, SelectionRule::yaleb_like,
                                                SplitRng(spec.seed).split("select").next_u64());
        std::vector<Unit> retained;
        retained.reserve(keep.size());
        for (const std::size_t i : keep) retained.push_back(units[i]);
        units = std::move(retained);
    }
    return assemble(spec, std::move(units));
}

Dataset fairface_like_sample(const DatasetSpec& spec) {
    if (spec.family != Family::fairface_like) {
        throw ConfigError("fairface_like_sample: wrong family");
    }
    std::vector<Unit> units = draw_units(spec);
    if (spec.bias_mode == BiasMode::biased) {
        const auto keep = selection_bias_filter(units, SelectionRule::fairface_like,
                                                SplitRng(spec.seed).split("select").next_u64());
        std::vector<Unit> retained;
        retained.reserve(keep.size());
        for (const std::size_t i : keep) retained.push_back(units[i]);
        units = std::move(retained);
    }
    return assemble(spec, std::move(units));
}

Dataset waterbirds_discrete(std::size_t n, std::uint64_t seed, BiasMode mode,
                            double feature_noise) {
    DatasetSpec spec;
    spec.family = Family::waterbirds_discrete;
    spec.n = n;
    spec.seed = seed;
    spec.bias_mode = mode;
    spec.feature_noise = feature_noise;
    return assemble(spec, draw_units(spec));
}

Dataset generate(const DatasetSpec& spec) {
    switch (spec.family) {
        case Family::blob: return blob_sample(spec);
        case Family::dsprites: return dsprites_sample(spec);
        case Family::yaleb_like: return yaleb_like_sample(spec);
        case Family::fairface_like: return fairface_like_sample(spec);
        case Family::waterbirds_discrete: return assemble(spec, draw_units(spec));
    }
    throw ConfigError("generate: unknown family");
}

std::vector<std::size_t> selection_bias_filter(const std::vector<Unit>& units,
                                               SelectionRule rule, std::uint64_t seed) {
    SplitRng rng(seed);
    std::vector<std::size_t> keep;
    keep.reserve(units.size());
    if (rule == SelectionRule::fairface_like) {
        for (std::size_t i = 0; i < units.size(); ++i) {
            const double p = units[i].endo("Y") == units[i].endo("B") ? 0.9 : 0.1;
            if (rng.bernoulli(p)) keep.push_back(i);
        }
        return keep;
    }
    // yaleb_like: z = QuantilePartition(v' standardize(az, el), 3), v = (1,1)'
    const std::size_t n = units.size();
    if (n == 0) return keep;
    std::vector<double> az(n), el(n);
    for (std::size_t i = 0; i < n; ++i) {
        az[i] = units[i].endo("az");
        el[i] = units[i].endo("el");
    }
    auto standardized = [](std::vector<double> v) {
        double mean = 0.0;
        for (const double x : v) mean += x;
        mean /= static_cast<double>(v.size());
        double var = 0.0;
        for (const double x : v) var += (x - mean) * (x - mean);
        var /= static_cast<double>(v.size());
        const double sd = var > 0.0 ? std::sqrt(var) : 1.0;
        for (double& x : v) x = (x - mean) / sd;
        return v;
    };
    const std::vector<double> saz = standardized(az);
    const std::vector<double> sel = standardized(el);
    std::vector<double> score(n);
    for (std::size_t i = 0; i < n; ++i) score[i] = saz[i] + sel[i];
    std::vector<double> sorted = score;
    std::sort(sorted.begin(), sorted.end());
    const double q1 = sorted[n / 3];
    const double q2 = sorted[(2 * n) / 3];
    for (std::size_t i = 0; i < n; ++i) {
        const int z = score[i] < q1 ? 0 : (score[i] < q2 ? 1 : 2);
        const double p = static_cast<int>(units[i].endo("pose")) == z ? 1.0 : 0.05;
        if (rng.bernoulli(p)) keep.push_back(i);
    }
    return keep;
}

Unit counterfactual(const DatasetSpec& spec, const Unit& unit,
                    const std::vector<std::pair<std::string, double>>& interventions) {
    for (const auto& [name, value] : interventions) {
        (void)value;
        lookup(unit.endogenous, name);  // throws InputError for unknown variables
    }
    Overrides ov{&interventions};
    Unit out;
    out.exogenous = unit.exogenous;
    out.endogenous = run_mechanisms(spec, out.exogenous, ov);
    if (spec.render) out.features = run_render(spec, out.endogenous, out.exogenous);
    return out;
}

std::vector<InterventionSupport> intervenable_variables(const DatasetSpec& spec) {
    switch (spec.family) {
        case Family::blob:
            return {{"CI", 0.0, 1.0}, {"BI", 0.0, 1.0}};
        case Family::dsprites:
            if (spec.multibias) {
                return {{"x", 0.05, 0.95},
                        {"y", 0.05, 0.95},
                        {"scale", 0.5, 0.7},
                        {"orientation", 0.0, 360.0}};
            }
            return {{"x", 0.0, 1.0}, {"y", 0.0, 1.0}, {"scale", 0.5, 0.7}};
        case Family::yaleb_like:
            return {{"az", -60.0, 60.0}, {"el", -60.0, 60.0}};
        case Family::fairface_like:
            return {{"B", 0.0, 1.0}};
        case Family::waterbirds_discrete:
            return {{"background", 0.0, 1.0}};
    }
    return {};
}

void apply_label_noise(Dataset& ds, double rate, std::uint64_t seed) {
    if (!(rate >= 0.0 && rate < 1.0)) throw ConfigError("label noise rate must be in [0, 1)");
    if (rate == 0.0) return;
    SplitRng rng(seed);
    if (ds.task == Task::classification) {
        const std::size_t k = ds.n_classes;
        for (double& t : ds.targets) {
            if (rng.bernoulli(rate)) {
                const std::size_t cur = static_cast<std::size_t>(t);
                t = static_cast<double>((cur + 1 + rng.uniform_int(k - 1)) % k);
            }
        }
        return;
    }
    double mean = 0.0;
    for (const double t : ds.targets) mean += t;
    mean /= static_cast<double>(ds.targets.size());
    double var = 0.0;
    for (const double t : ds.targets) var += (t - mean) * (t - mean);
    var /= static_cast<double>(ds.targets.size());
    const double sd = std::sqrt(var);
    for (double& t : ds.targets) t += rng.normal(0.0, rate * sd);
}

namespace {

std::vector<double> quantile_edges(std::vector<double> v, std::size_t bins) {
    std::sort(v.begin(), v.end());
    std::vector<double> edges;
    for (std::size_t b = 1; b < bins; ++b) edges.push_back(v[(b * v.size()) / bins]);
    return edges;
}

std::size_t bin_of(double x, const std::vector<double>& edges) {
    std::size_t b = 0;
    while (b < edges.size() && x >= edges[b]) ++b;
    return b;
}

}  // namespace

PositivityReport positivity_diagnostic(const Dataset& ds, std::size_t bins) {
    if (ds.n() == 0 || ds.bias_names.empty()) {
        throw InputError("positivity_diagnostic: dataset has no units or no bias attribute");
    }
    std::vector<double> bias(ds.n());
    for (std::size_t i = 0; i < ds.n(); ++i) bias[i] = ds.units[i].endo(ds.bias_names[0]);

    auto edges_for = [&](const std::vector<double>& v, bool categorical) {
        if (categorical) {
            std::vector<double> vals = v;
            std::sort(vals.begin(), vals.end());
            vals.erase(std::unique(vals.begin(), vals.end()), vals.end());
            std::vector<double> edges(vals.begin() + 1, vals.end());
            return edges;
        }
        return quantile_edges(v, bins);
    };

    std::vector<double> dist_b = bias;
    std::sort(dist_b.begin(), dist_b.end());
    dist_b.erase(std::unique(dist_b.begin(), dist_b.end()), dist_b.end());
    const bool bcat = dist_b.size() <= bins;

    const std::vector<double> ye = edges_for(ds.targets, ds.task == Task::classification);
    const std::vector<double> be = edges_for(bias, bcat);
    const std::size_t ny = ye.size() + 1;
    const std::size_t nb = be.size() + 1;
    std::vector<std::vector<double>> counts(ny, std::vector<double>(nb, 0.0));
    std::vector<double> ytot(ny, 0.0);
    for (std::size_t i = 0; i < ds.n(); ++i) {
        const std::size_t yb = bin_of(ds.targets[i], ye);
        const std::size_t bb = bin_of(bias[i], be);
        counts[yb][bb] += 1.0;
        ytot[yb] += 1.0;
    }
    double min_cond = 1.0;
    for (std::size_t yb = 0; yb < ny; ++yb) {
        if (ytot[yb] == 0.0) continue;
        for (std::size_t bb = 0; bb < nb; ++bb) {
            min_cond = std::min(min_cond, counts[yb][bb] / ytot[yb]);
        }
    }
    PositivityReport rep;
    rep.y_bins = ny;
    rep.b_bins = nb;
    rep.min_conditional = min_cond;
    rep.positive = min_cond > 0.0;
    return rep;
}

std::string PositivityReport::format() const {
    std::ostringstream os;
    os << "positivity: min P(b|y) over " << y_bins << "x" << b_bins
       << " cells = " << min_conditional << (positive ? " (overlap holds)" : " (VIOLATED)");
    return os.str();
}

// ---- serialization -----------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'D', 'S', 'C', 'D', '0', '0', '0', '1'};

void write_u64(std::ostream& os, std::uint64_t v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
void write_f64(std::ostream& os, double v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
void write_str(std::ostream& os, const std::string& s) {
    write_u64(os, s.size());
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
}
std::uint64_t read_u64(std::istream& is) {
    std::uint64_t v = 0;
    is.read(reinterpret_cast<char*>(&v), sizeof(v));
    return v;
}
double read_f64(std::istream& is) {
    double v = 0;
    is.read(reinterpret_cast<char*>(&v), sizeof(v));
    return v;
}
std::string read_str(std::istream& is) {
    const std::uint64_t n = read_u64(is);
    std::string s(n, '\0');
    is.read(s.data(), static_cast<std::streamsize>(n));
    return s;
}

}  // namespace

void save_dataset(const std::string& path, const Dataset& ds) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open for writing: " + path);
    os.write(kMagic, sizeof(kMagic));
    write_str(os, family_to_string(ds.spec.family));
    write_u64(os, ds.spec.n);
    write_u64(os, ds.spec.seed);
    write_f64(os, ds.spec.label_noise);
    write_u64(os, ds.spec.bias_mode == BiasMode::biased ? 1 : 0);
    write_u64(os, ds.spec.resolution);
    write_f64(os, ds.spec.feature_noise);
    write_u64(os, ds.spec.multibias ? 1 : 0);
    write_u64(os, ds.spec.render ? 1 : 0);

    write_u64(os, ds.n());
    write_u64(os, ds.feature_dim());
    write_u64(os, ds.bias_names.size());
    write_u64(os, ds.n_classes);
    write_u64(os, ds.task == Task::classification ? 1 : 0);
    write_str(os, ds.target_name);
    for (const auto& b : ds.bias_names) write_str(os, b);

    for (const Unit& u : ds.units) {
        for (const double f : u.features) write_f64(os, f);
    }
    for (const double t : ds.targets) write_f64(os, t);
    for (const Unit& u : ds.units) {
        for (const auto& b : ds.bias_names) write_f64(os, u.endo(b));
    }
    const std::size_t n_exo = ds.units.empty() ? 0 : ds.units[0].exogenous.size();
    write_u64(os, n_exo);
    if (n_exo > 0) {
        for (const auto& [k, v] : ds.units[0].exogenous) {
            (void)v;
            write_str(os, k);
        }
        for (const Unit& u : ds.units) {
            for (const auto& [k, v] : u.exogenous) {
                (void)k;
                write_f64(os, v);
            }
        }
    }
    if (!os) throw IoError("write failed: " + path);
}

Dataset load_dataset(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open for reading: " + path);
    char magic[8];
    is.read(magic, sizeof(magic));
    if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
        throw IoError("not a dataset container: " + path);
    }
    DatasetSpec spec;
    spec.family = family_from_string(read_str(is));
    spec.n = read_u64(is);
    spec.seed = read_u64(is);
    spec.label_noise = read_f64(is);
    spec.bias_mode = read_u64(is) == 1 ? BiasMode::biased : BiasMode::unbiased;
    spec.resolution = read_u64(is);
    spec.feature_noise = read_f64(is);
    spec.multibias = read_u64(is) == 1;
    spec.render = read_u64(is) == 1;

    Dataset ds;
    ds.spec = spec;
    const std::uint64_t n = read_u64(is);
    const std::uint64_t fdim = read_u64(is);
    const std::uint64_t nbias = read_u64(is);
    ds.n_classes = read_u64(is);
    ds.task = read_u64(is) == 1 ? Task::classification : Task::regression;
    ds.target_name = read_str(is);
    for (std::uint64_t i = 0; i < nbias; ++i) ds.bias_names.push_back(read_str(is));

    std::vector<std::vector<double>> feats(n, std::vector<double>(fdim));
    for (auto& row : feats) {
        for (double& f : row) f = read_f64(is);
    }
    ds.targets.resize(n);
    for (double& t : ds.targets) t = read_f64(is);
    for (std::uint64_t i = 0; i < n * nbias; ++i) (void)read_f64(is);  // recomputed from units

    const std::uint64_t n_exo = read_u64(is);
    std::vector<std::string> exo_names(n_exo);
    for (auto& s : exo_names) s = read_str(is);
    ds.units.reserve(n);
    for (std::uint64_t i = 0; i < n; ++i) {
        Fields exo;
        exo.reserve(n_exo);
        for (const auto& name : exo_names) exo.emplace_back(name, read_f64(is));
        Unit u;
        u.exogenous = std::move(exo);
        u.endogenous = run_mechanisms(spec, u.exogenous, Overrides{});
        u.features = std::move(feats[i]);
        ds.units.push_back(std::move(u));
    }
    if (!is) throw IoError("truncated dataset container: " + path);
    return ds;
}

void export_csv(const std::string& path, const Dataset& ds) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot open for writing: " + path);
    os << "unit";
    if (!ds.units.empty()) {
        for (const auto& [k, v] : ds.units[0].exogenous) {
            (void)v;
            os << "," << k;
        }
        for (const auto& [k, v] : ds.units[0].endogenous) {
            (void)v;
            os << "," << k;
        }
    }
    os << ",target\n";
    char buf[32];
    for (std::size_t i = 0; i < ds.n(); ++i) {
        os << i;
        auto emit = [&](double v) {
            std::snprintf(buf, sizeof(buf), "%.17g", v);
            os << "," << buf;
        };
        for (const auto& [k, v] : ds.units[i].exogenous) {
            (void)k;
            emit(v);
        }
        for (const auto& [k, v] : ds.units[i].endogenous) {
            (void)k;
            emit(v);
        }
        emit(ds.targets[i]);
        os << "\n";
    }
    if (!os) throw IoError("write failed: " + path);
}

}  // namespace disco
