#include "disco/pathways.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <sstream>

#include "json.hpp"

namespace disco {
namespace {

constexpr std::size_t kMaxStates = 10'000'000;

}  // namespace

DiscreteSCM DiscreteSCM::from_variables(std::vector<ScmVariable> vars) {
    DiscreteSCM scm;
    scm.vars_ = std::move(vars);
    std::map<std::string, std::size_t> seen;
    for (std::size_t i = 0; i < scm.vars_.size(); ++i) {
        const ScmVariable& v = scm.vars_[i];
        if (v.support.empty()) throw SchemaError("variable " + v.name + " has empty support");
        if (v.exo_probs.empty()) {
            throw SchemaError("variable " + v.name + " has no exogenous distribution");
        }
        double psum = 0.0;
        for (const double p : v.exo_probs) {
            if (p < 0.0) throw SchemaError("negative exogenous probability in " + v.name);
            psum += p;
        }
        if (std::abs(psum - 1.0) > 1e-12) {
            throw SchemaError("exogenous probabilities of " + v.name + " sum to " +
                              std::to_string(psum));
        }
        std::size_t domain = v.exo_probs.size();
        for (const std::string& p : v.parents) {
            auto it = seen.find(p);
            if (it == seen.end()) {
                throw SchemaError("parent " + p + " of " + v.name +
                                  " is undeclared or later in order (graph must be a DAG)");
            }
            domain *= scm.vars_[it->second].support.size();
        }
        if (v.table.size() != domain) {
            throw SchemaError("mechanism table of " + v.name + " has " +
                              std::to_string(v.table.size()) + " entries, expected " +
                              std::to_string(domain));
        }
        for (const std::size_t e : v.table) {
            if (e >= v.support.size()) {
                throw SchemaError("mechanism of " + v.name + " maps outside its support");
            }
        }
        seen[v.name] = i;
    }
    return scm;
}

std::size_t DiscreteSCM::index_of(const std::string& name) const {
    for (std::size_t i = 0; i < vars_.size(); ++i) {
        if (vars_[i].name == name) return i;
    }
    throw InputError("unknown SCM variable: " + name);
}

std::size_t DiscreteSCM::exo_state_count() const {
    std::size_t total = 1;
    for (const ScmVariable& v : vars_) {
        if (total > kMaxStates / v.exo_probs.size()) {
            throw CapacityError("exogenous state space exceeds 1e7 states");
        }
        total *= v.exo_probs.size();
    }
    return total;
}

void DiscreteSCM::evaluate(const std::vector<std::size_t>& exo_state,
                           const std::vector<int>& interventions,
                           std::vector<std::size_t>& out) const {
    out.resize(vars_.size());
    for (std::size_t i = 0; i < vars_.size(); ++i) {
        if (interventions[i] >= 0) {
            out[i] = static_cast<std::size_t>(interventions[i]);
            continue;
        }
        const ScmVariable& v = vars_[i];
        std::size_t idx = 0;
        for (const std::string& pname : v.parents) {
            const std::size_t pi = index_of(pname);
            idx = idx * vars_[pi].support.size() + out[pi];
        }
        idx = idx * v.exo_probs.size() + exo_state[i];
        out[i] = v.table[idx];
    }
}

DiscreteSCM DiscreteSCM::from_json(const std::string& text) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw SchemaError(std::string("SCM document is not valid JSON: ") + e.what());
    }
    if (!doc.contains("version") || doc["version"] != 1) {
        throw SchemaError("SCM document must declare version 1");
    }
    if (!doc.contains("variables") || !doc["variables"].is_array()) {
        throw SchemaError("SCM document needs a variables array");
    }
    std::vector<ScmVariable> vars;
    for (const auto& jv : doc["variables"]) {
        ScmVariable v;
        v.name = jv.at("name").get<std::string>();
        v.support = jv.at("support").get<std::vector<double>>();
        if (jv.contains("parents")) v.parents = jv.at("parents").get<std::vector<std::string>>();
        v.exo_probs = jv.at("exogenous").get<std::vector<double>>();
        v.table = jv.at("mechanism").get<std::vector<std::size_t>>();
        vars.push_back(std::move(v));
    }
    return from_variables(std::move(vars));
}

std::string DiscreteSCM::to_json() const {
    nlohmann::json doc;
    doc["version"] = 1;
    doc["variables"] = nlohmann::json::array();
    for (const ScmVariable& v : vars_) {
        nlohmann::json jv;
        jv["name"] = v.name;
        jv["support"] = v.support;
        jv["parents"] = v.parents;
        jv["exogenous"] = v.exo_probs;
        jv["mechanism"] = v.table;
        doc["variables"].push_back(jv);
    }
    return doc.dump(2);
}

PredictorTable PredictorTable::deterministic(const std::string& input,
                                             const std::vector<double>& output_support,
                                             const std::vector<std::size_t>& mapping) {
    PredictorTable p;
    p.input = input;
    p.output_support = output_support;
    p.rows = Matrix(mapping.size(), output_support.size());
    for (std::size_t i = 0; i < mapping.size(); ++i) {
        if (mapping[i] >= output_support.size()) {
            throw InputError("predictor mapping outside the output support");
        }
        p.rows.at(i, mapping[i]) = 1.0;
    }
    return p;
}

PredictorTable PredictorTable::constant(const std::string& input, std::size_t input_values,
                                        const std::vector<double>& output_support,
                                        std::size_t value_index) {
    std::vector<std::size_t> mapping(input_values, value_index);
    return deterministic(input, output_support, mapping);
}

double JointDistribution::total() const {
    double s = 0.0;
    for (const double p : probs) s += p;
    return s;
}

std::size_t JointDistribution::flat_index(const std::vector<std::size_t>& assignment) const {
    std::size_t idx = 0;
    for (std::size_t i = 0; i < sizes.size(); ++i) idx = idx * sizes[i] + assignment[i];
    return idx;
}

JointDistribution enumerate_joint(const DiscreteSCM& scm) {
    JointDistribution joint;
    std::size_t cells = 1;
    for (std::size_t i = 0; i < scm.n_vars(); ++i) {
        joint.names.push_back(scm.var(i).name);
        joint.sizes.push_back(scm.var(i).support.size());
        if (cells > kMaxStates / joint.sizes.back()) {
            throw CapacityError("joint support exceeds 1e7 states");
        }
        cells *= joint.sizes.back();
    }
    joint.probs.assign(cells, 0.0);
    const std::vector<int> none(scm.n_vars(), -1);
    std::vector<std::size_t> values;
    scm.for_each_exo_state([&](const std::vector<std::size_t>& state, double p) {
        scm.evaluate(state, none, values);
        joint.probs[joint.flat_index(values)] += p;
    });
    return joint;
}

namespace {

struct RoleIndices {
    std::size_t y = 0;
    std::vector<std::size_t> w;
    std::vector<std::size_t> z;
    std::size_t x = 0;
};

RoleIndices resolve_roles(const DiscreteSCM& scm, const SamRoles& roles) {
    RoleIndices r;
    r.y = scm.index_of(roles.y);
    for (const auto& n : roles.w) r.w.push_back(scm.index_of(n));
    for (const auto& n : roles.z) r.z.push_back(scm.index_of(n));
    r.x = scm.index_of(roles.x);
    return r;
}

std::size_t yhat_index(const PredictorTable& pred, double yhat) {
    for (std::size_t i = 0; i < pred.output_support.size(); ++i) {
        if (pred.output_support[i] == yhat) return i;
    }
    throw InputError("yhat value not in the predictor output support");
}

struct CellAccum {
    double p_cell = 0.0;
    double n_nested = 0.0;  // P(yhat_{y1, w_{y0}} and cell)
    double n_y0 = 0.0;      // P(yhat_{y0} and cell)
    double n_y1 = 0.0;      // P(yhat_{y1} and cell)
};

struct PassResult {
    double p_y0 = 0.0;
    double p_y1 = 0.0;
    double p_cond = 0.0;     // P(Y = cond_y)
    double tv_num_y0 = 0.0;  // P(yhat and Y=y0), factual worlds
    double tv_num_y1 = 0.0;
    double se_num_y0 = 0.0;  // P(yhat_{y1} and Y=y0)
    double se_num_y1 = 0.0;
    std::map<std::vector<std::size_t>, CellAccum> cells;  // keyed by (w..., z...)

    double tv() const {
        if (p_y0 <= 0.0 || p_y1 <= 0.0) {
            throw UndefinedConditionalError("conditioning on a zero-probability target value");
        }
        return tv_num_y1 / p_y1 - tv_num_y0 / p_y0;
    }
    double se() const {
        if (p_y0 <= 0.0 || p_y1 <= 0.0) {
            throw UndefinedConditionalError("conditioning on a zero-probability target value");
        }
        return se_num_y0 / p_y0 - se_num_y1 / p_y1;
    }
};

// One exact pass over the exogenous space. Computes the factual conditionals
// for TV, the y1-interventional conditionals for the spurious effect, and the
// per-(w, z)-cell accumulators for the nested counterfactual worlds, with
// cells collected on the event Y = cond_y.
PassResult counterfactual_pass(const DiscreteSCM& scm, const PredictorTable& pred,
                               const RoleIndices& r, std::size_t y0i, std::size_t y1i,
                               std::size_t yhi, std::size_t cond_yi) {
    const std::size_t n = scm.n_vars();
    const std::vector<int> none(n, -1);
    std::vector<int> do_y0(n, -1), do_y1(n, -1);
    do_y0[r.y] = static_cast<int>(y0i);
    do_y1[r.y] = static_cast<int>(y1i);

    PassResult out;
    std::vector<std::size_t> vf, v0, v1, vn;
    std::vector<int> do_nested(n, -1);
    std::vector<std::size_t> key(r.w.size() + r.z.size());
    scm.for_each_exo_state([&](const std::vector<std::size_t>& state, double p) {
        scm.evaluate(state, none, vf);
        scm.evaluate(state, do_y0, v0);
        scm.evaluate(state, do_y1, v1);
        do_nested = do_y1;
        for (const std::size_t wi : r.w) do_nested[wi] = static_cast<int>(v0[wi]);
        scm.evaluate(state, do_nested, vn);

        const double pf = pred.rows.at(vf[r.x], yhi);
        const double p1 = pred.rows.at(v1[r.x], yhi);
        if (vf[r.y] == y0i) {
            out.p_y0 += p;
            out.tv_num_y0 += p * pf;
            out.se_num_y0 += p * p1;
        }
        if (vf[r.y] == y1i) {
            out.p_y1 += p;
            out.tv_num_y1 += p * pf;
            out.se_num_y1 += p * p1;
        }
        if (vf[r.y] == cond_yi) {
            out.p_cond += p;
            std::size_t k = 0;
            for (const std::size_t wi : r.w) key[k++] = vf[wi];
            for (const std::size_t zi : r.z) key[k++] = vf[zi];
            CellAccum& cell = out.cells[key];
            cell.p_cell += p;
            cell.n_nested += p * pred.rows.at(vn[r.x], yhi);
            cell.n_y0 += p * pred.rows.at(v0[r.x], yhi);
            cell.n_y1 += p * p1;
        }
    });
    return out;
}

double aggregate_residual(const PassResult& pass) {
    double agg = 0.0;
    for (const auto& [key, cell] : pass.cells) {
        if (cell.p_cell <= 0.0) continue;
        const double stable = (cell.n_nested - cell.n_y0) / cell.p_cell;
        const double ie = (cell.n_nested - cell.n_y1) / cell.p_cell;
        agg += (cell.p_cell / pass.p_cond) * (stable - ie);
    }
    return std::abs(pass.tv() - (agg - pass.se()));
}

}  // namespace

double tv(const DiscreteSCM& scm, const PredictorTable& pred, const SamRoles& roles,
          double y0, double y1, double yhat) {
    const RoleIndices r = resolve_roles(scm, roles);
    const ScmVariable& yv = scm.var(r.y);
    std::size_t y0i = scm.var(r.y).support.size(), y1i = y0i;
    for (std::size_t i = 0; i < yv.support.size(); ++i) {
        if (yv.support[i] == y0) y0i = i;
        if (yv.support[i] == y1) y1i = i;
    }
    if (y0i >= yv.support.size() || y1i >= yv.support.size()) {
        throw InputError("tv: y0/y1 outside the target support");
    }
    const PassResult pass =
        counterfactual_pass(scm, pred, r, y0i, y1i, yhat_index(pred, yhat), y0i);
    return pass.tv();
}

CtfEffects ctf_effects(const DiscreteSCM& scm, const PredictorTable& pred,
                       const SamRoles& roles, double y0, double y1, double yhat,
                       double y_cond, const std::vector<double>& w_vals,
                       const std::vector<double>& z_vals) {
    const RoleIndices r = resolve_roles(scm, roles);
    if (w_vals.size() != r.w.size() || z_vals.size() != r.z.size()) {
        throw InputError("ctf_effects: conditioning realization has the wrong arity");
    }
    const auto idx_in = [&](std::size_t var, double value) {
        const ScmVariable& v = scm.var(var);
        for (std::size_t i = 0; i < v.support.size(); ++i) {
            if (v.support[i] == value) return i;
        }
        throw InputError("ctf_effects: value outside the support of " + v.name);
    };
    const std::size_t y0i = idx_in(r.y, y0);
    const std::size_t y1i = idx_in(r.y, y1);
    const std::size_t condi = idx_in(r.y, y_cond);
    const PassResult pass =
        counterfactual_pass(scm, pred, r, y0i, y1i, yhat_index(pred, yhat), condi);

    std::vector<std::size_t> key;
    for (std::size_t k = 0; k < r.w.size(); ++k) key.push_back(idx_in(r.w[k], w_vals[k]));
    for (std::size_t k = 0; k < r.z.size(); ++k) key.push_back(idx_in(r.z[k], z_vals[k]));
    const auto it = pass.cells.find(key);
    if (it == pass.cells.end() || it->second.p_cell <= 0.0) {
        throw UndefinedConditionalError("ctf_effects: zero-probability conditioning event");
    }
    CtfEffects out;
    out.stable = (it->second.n_nested - it->second.n_y0) / it->second.p_cell;
    out.ie = (it->second.n_nested - it->second.n_y1) / it->second.p_cell;
    out.se = pass.se();
    return out;
}

namespace {

double decomposition_residual(const DiscreteSCM& scm, const PredictorTable& pred,
                              const SamRoles& roles, double y0, double y1, double yhat,
                              bool condition_on_y1) {
    const RoleIndices r = resolve_roles(scm, roles);
    const ScmVariable& yv = scm.var(r.y);
    std::size_t y0i = yv.support.size(), y1i = y0i;
    for (std::size_t i = 0; i < yv.support.size(); ++i) {
        if (yv.support[i] == y0) y0i = i;
        if (yv.support[i] == y1) y1i = i;
    }
    if (y0i >= yv.support.size() || y1i >= yv.support.size()) {
        throw InputError("verify_decomposition: y0/y1 outside the target support");
    }
    const std::size_t condi = condition_on_y1 ? y1i : y0i;
    const PassResult pass =
        counterfactual_pass(scm, pred, r, y0i, y1i, yhat_index(pred, yhat), condi);
    if (pass.p_cond <= 0.0) {
        throw UndefinedConditionalError("verify_decomposition: zero-probability conditioning");
    }
    return aggregate_residual(pass);
}

}  // namespace

double verify_decomposition(const DiscreteSCM& scm, const PredictorTable& pred,
                            const SamRoles& roles, double y0, double y1, double yhat) {
    return decomposition_residual(scm, pred, roles, y0, y1, yhat, false);
}

double verify_decomposition_y1(const DiscreteSCM& scm, const PredictorTable& pred,
                               const SamRoles& roles, double y0, double y1, double yhat) {
    return decomposition_residual(scm, pred, roles, y0, y1, yhat, true);
}

StabilityCertificate stability_certificate(const DiscreteSCM& scm, const PredictorTable& pred,
                                           const SamRoles& roles) {
    const RoleIndices r = resolve_roles(scm, roles);
    const std::size_t ny = scm.var(r.y).support.size();
    const std::size_t nyh = pred.output_support.size();

    // exact joint of (Y, cell, Yhat)
    std::map<std::pair<std::size_t, std::vector<std::size_t>>, std::vector<double>> cells;
    std::vector<double> p_y(ny, 0.0);
    std::vector<std::vector<double>> p_yhat_given_y(ny, std::vector<double>(nyh, 0.0));
    const std::vector<int> none(scm.n_vars(), -1);
    std::vector<std::size_t> vf;
    scm.for_each_exo_state([&](const std::vector<std::size_t>& state, double p) {
        scm.evaluate(state, none, vf);
        std::vector<std::size_t> key;
        for (const std::size_t wi : r.w) key.push_back(vf[wi]);
        for (const std::size_t zi : r.z) key.push_back(vf[zi]);
        auto& dist = cells[{vf[r.y], key}];
        if (dist.empty()) dist.assign(nyh, 0.0);
        p_y[vf[r.y]] += p;
        for (std::size_t h = 0; h < nyh; ++h) {
            const double ph = p * pred.rows.at(vf[r.x], h);
            dist[h] += ph;
            p_yhat_given_y[vf[r.y]][h] += ph;
        }
    });

    StabilityCertificate cert;
    for (const auto& [ykey, dist] : cells) {
        const auto& [yi, cell_key] = ykey;
        if (p_y[yi] <= 0.0) continue;
        double p_cell = 0.0;
        for (const double v : dist) p_cell += v;  // joint P(y, cell) marginalized over yhat
        // dist[h] here is P(y, cell, yhat=h) only if yhat summed to the cell mass;
        // the predictor rows sum to 1, so the sum recovers P(y, cell)
        for (std::size_t h = 0; h < nyh; ++h) {
            const double lhs = dist[h] / p_y[yi];                      // P(yhat, cell | y)
            const double rhs = (p_yhat_given_y[yi][h] / p_y[yi]) *     // P(yhat | y)
                               (p_cell / p_y[yi]);                     // P(cell | y)
            cert.ci_residual = std::max(cert.ci_residual, std::abs(lhs - rhs));
        }
    }
    cert.is_ci = cert.ci_residual <= 1e-12;

    // max effects and the stable-effect spread over all realizations
    for (std::size_t y0i = 0; y0i < ny; ++y0i) {
        for (std::size_t y1i = 0; y1i < ny; ++y1i) {
            if (y0i == y1i) continue;
            if (p_y[y0i] <= 0.0 || p_y[y1i] <= 0.0) continue;
            for (std::size_t condi = 0; condi < ny; ++condi) {
                if (p_y[condi] <= 0.0) continue;
                for (std::size_t h = 0; h < nyh; ++h) {
                    const PassResult pass = counterfactual_pass(scm, pred, r, y0i, y1i, h, condi);
                    cert.max_se = std::max(cert.max_se, std::abs(pass.se()));
                    double stable_min = 1e300, stable_max = -1e300;
                    for (const auto& [key, cell] : pass.cells) {
                        if (cell.p_cell <= 0.0) continue;
                        const double stable = (cell.n_nested - cell.n_y0) / cell.p_cell;
                        const double ie = (cell.n_nested - cell.n_y1) / cell.p_cell;
                        cert.max_ie = std::max(cert.max_ie, std::abs(ie));
                        stable_min = std::min(stable_min, stable);
                        stable_max = std::max(stable_max, stable);
                    }
                    if (stable_max >= stable_min) {
                        cert.de_spread = std::max(cert.de_spread, stable_max - stable_min);
                    }
                }
            }
        }
    }
    return cert;
}

bool mle_stable_maximizer_check(const DiscreteSCM& scm, const SamRoles& roles) {
    const RoleIndices r = resolve_roles(scm, roles);
    const ScmVariable& yv = scm.var(r.y);
    const ScmVariable& xv = scm.var(r.x);
    if (yv.support.size() != 2) {
        throw ContractError("mle_stable_maximizer_check: binary target required");
    }
    const std::size_t nx = xv.support.size();
    std::size_t n_tables = 1;
    for (std::size_t i = 0; i < nx; ++i) {
        if (n_tables > 4096 / yv.support.size()) {
            throw CapacityError("predictor table enumeration beyond the tiny-scale bound");
        }
        n_tables *= yv.support.size();
    }

    // joint of (X, Y) for the likelihood score
    std::vector<std::vector<double>> p_xy(nx, std::vector<double>(2, 0.0));
    std::vector<double> p_y(2, 0.0);
    const std::vector<int> none(scm.n_vars(), -1);
    std::vector<std::size_t> vf;
    scm.for_each_exo_state([&](const std::vector<std::size_t>& state, double p) {
        scm.evaluate(state, none, vf);
        p_xy[vf[r.x]][vf[r.y]] += p;
        p_y[vf[r.y]] += p;
    });
    if (p_y[0] <= 0.0 || p_y[1] <= 0.0) {
        throw UndefinedConditionalError("degenerate target distribution");
    }

    const double y0 = yv.support[0];
    const double y1 = yv.support[1];
    double best_likelihood = -1e300;
    double best_like_stable = -1e300;
    double max_stable = -1e300;
    bool any_ci = false;
    for (std::size_t code = 0; code < n_tables; ++code) {
        std::vector<std::size_t> mapping(nx);
        std::size_t c = code;
        for (std::size_t i = 0; i < nx; ++i) {
            mapping[i] = c % 2;
            c /= 2;
        }
        const PredictorTable pred =
            PredictorTable::deterministic(roles.x, {y0, y1}, mapping);
        const StabilityCertificate cert = stability_certificate(scm, pred, roles);
        if (!cert.is_ci) continue;
        any_ci = true;

        // per-class recall sum: the TV-maximizing likelihood reading
        double likelihood = 0.0;
        for (std::size_t yi = 0; yi < 2; ++yi) {
            double correct = 0.0;
            for (std::size_t xi = 0; xi < nx; ++xi) {
                if (mapping[xi] == yi) correct += p_xy[xi][yi];
            }
            likelihood += correct / p_y[yi];
        }

        // aggregated stable effect for (y0, y1, yhat = y1)
        const RoleIndices ri = resolve_roles(scm, roles);
        const PassResult pass = counterfactual_pass(scm, pred, ri, 0, 1, 1, 0);
        double stable = 0.0;
        for (const auto& [key, cell] : pass.cells) {
            if (cell.p_cell <= 0.0) continue;
            stable += (cell.p_cell / pass.p_cond) * (cell.n_nested - cell.n_y0) / cell.p_cell;
        }
        max_stable = std::max(max_stable, stable);
        if (likelihood > best_likelihood + 1e-12) {
            best_likelihood = likelihood;
            best_like_stable = stable;
        } else if (likelihood > best_likelihood - 1e-12) {
            best_like_stable = std::max(best_like_stable, stable);
        }
    }
    if (!any_ci) return true;  // vacuous; constants always qualify, so unreachable
    return best_like_stable >= max_stable - 1e-9;
}

PathwayReport pathway_report(const DiscreteSCM& scm, const PredictorTable& pred,
                             const SamRoles& roles) {
    PathwayReport report;
    const RoleIndices r = resolve_roles(scm, roles);
    const ScmVariable& yv = scm.var(r.y);
    for (std::size_t y0i = 0; y0i < yv.support.size(); ++y0i) {
        for (std::size_t y1i = 0; y1i < yv.support.size(); ++y1i) {
            if (y0i == y1i) continue;
            for (std::size_t h = 0; h < pred.output_support.size(); ++h) {
                const PassResult pass = counterfactual_pass(scm, pred, r, y0i, y1i, h, y0i);
                if (pass.p_y0 <= 0.0 || pass.p_y1 <= 0.0) continue;
                PathwayEntry e;
                e.y0 = yv.support[y0i];
                e.y1 = yv.support[y1i];
                e.yhat = pred.output_support[h];
                e.tv = pass.tv();
                e.ctf_se = pass.se();
                for (const auto& [key, cell] : pass.cells) {
                    if (cell.p_cell <= 0.0) continue;
                    const double w = cell.p_cell / pass.p_cond;
                    e.ctf_stable += w * (cell.n_nested - cell.n_y0) / cell.p_cell;
                    e.ctf_ie += w * (cell.n_nested - cell.n_y1) / cell.p_cell;
                }
                e.decomposition_residual = std::abs(e.tv - (e.ctf_stable - e.ctf_ie - e.ctf_se));
                report.entries.push_back(e);
            }
        }
    }
    report.certificate = stability_certificate(scm, pred, roles);
    return report;
}

std::string pathway_report_to_json(const PathwayReport& report) {
    nlohmann::json doc;
    doc["entries"] = nlohmann::json::array();
    for (const PathwayEntry& e : report.entries) {
        doc["entries"].push_back({{"y0", e.y0},
                                  {"y1", e.y1},
                                  {"yhat", e.yhat},
                                  {"tv", e.tv},
                                  {"ctf_stable", e.ctf_stable},
                                  {"ctf_ie", e.ctf_ie},
                                  {"ctf_se", e.ctf_se},
                                  {"decomposition_residual", e.decomposition_residual}});
    }
    doc["certificate"] = {{"is_ci", report.certificate.is_ci},
                          {"ci_residual", report.certificate.ci_residual},
                          {"max_ie", report.certificate.max_ie},
                          {"max_se", report.certificate.max_se},
                          {"de_spread", report.certificate.de_spread}};
    return doc.dump(2);
}

DiscreteSCM random_sam(SplitRng& rng, const RandomSamOptions& opts) {
    auto random_probs = [&rng](std::size_t k) {
        std::vector<double> p(k);
        double s = 0.0;
        for (double& v : p) {
            v = rng.uniform(0.15, 0.85);
            s += v;
        }
        for (double& v : p) v /= s;
        double total = 0.0;
        for (const double v : p) total += v;
        p[0] += 1.0 - total;  // exact unit sum
        return p;
    };
    auto random_table = [&rng](std::size_t domain, std::size_t values) {
        std::vector<std::size_t> t(domain);
        for (auto& e : t) e = rng.uniform_int(values);
        return t;
    };
    auto support_of = [](std::size_t k) {
        std::vector<double> s(k);
        for (std::size_t i = 0; i < k; ++i) s[i] = static_cast<double>(i);
        return s;
    };

    std::vector<ScmVariable> vars;
    vars.push_back({"Z", support_of(opts.z_values), {}, random_probs(opts.exo_values),
                    random_table(opts.exo_values, opts.z_values)});
    vars.push_back({"Y", support_of(opts.y_values), {"Z"}, random_probs(opts.exo_values),
                    random_table(opts.z_values * opts.exo_values, opts.y_values)});
    vars.push_back({"W", support_of(opts.w_values), {"Y"}, random_probs(opts.exo_values),
                    random_table(opts.y_values * opts.exo_values, opts.w_values)});
    if (opts.x_reads_only_y) {
        vars.push_back({"X", support_of(opts.x_values), {"Y"}, random_probs(opts.exo_values),
                        random_table(opts.y_values * opts.exo_values, opts.x_values)});
    } else {
        vars.push_back({"X", support_of(opts.x_values), {"Z", "Y", "W"},
                        random_probs(opts.exo_values),
                        random_table(opts.z_values * opts.y_values * opts.w_values *
                                         opts.exo_values,
                                     opts.x_values)});
    }
    return DiscreteSCM::from_variables(std::move(vars));
}

SamRoles sam_roles() { return SamRoles{"Y", {"W"}, {"Z"}, "X"}; }

PredictorTable random_predictor(SplitRng& rng, const DiscreteSCM& scm, const SamRoles& roles,
                                bool deterministic) {
    const std::size_t xi = scm.index_of(roles.x);
    const std::size_t yi = scm.index_of(roles.y);
    const std::size_t nx = scm.var(xi).support.size();
    const std::vector<double> out_support = scm.var(yi).support;
    if (deterministic) {
        std::vector<std::size_t> mapping(nx);
        for (auto& m : mapping) m = rng.uniform_int(out_support.size());
        return PredictorTable::deterministic(roles.x, out_support, mapping);
    }
    PredictorTable p;
    p.input = roles.x;
    p.output_support = out_support;
    p.rows = Matrix(nx, out_support.size());
    for (std::size_t i = 0; i < nx; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < out_support.size(); ++j) {
            p.rows.at(i, j) = rng.uniform(0.05, 1.0);
            s += p.rows.at(i, j);
        }
        double total = 0.0;
        for (std::size_t j = 0; j < out_support.size(); ++j) {
            p.rows.at(i, j) /= s;
            total += p.rows.at(i, j);
        }
        p.rows.at(i, 0) += 1.0 - total;
    }
    return p;
}

// ---- Monte Carlo counterfactual analysis --------------------------------------

namespace {

struct TargetIntervention {
    std::string name;
    double lo = 0.0;
    double hi = 0.0;
    bool discrete = false;
    std::size_t levels = 0;
};

TargetIntervention target_intervention(const DatasetSpec& spec) {
    switch (spec.family) {
        case Family::blob:
            return {"CI", 0.0, 1.0, false, 0};
        case Family::dsprites:
            if (spec.multibias) return {"scale", 0.5, 0.7, false, 0};
            return {"y", 0.0, 1.0, false, 0};
        case Family::yaleb_like:
            return {"pose", 0.0, 2.0, true, 3};
        case Family::fairface_like:
            return {"Y", 0.0, 1.0, true, 2};
        case Family::waterbirds_discrete:
            return {"bird", 0.0, 1.0, true, 2};
    }
    throw InputError("unknown family");
}

Matrix one_row(const std::vector<double>& v) {
    Matrix m(1, v.size());
    std::copy(v.begin(), v.end(), m.data());
    return m;
}

double prediction_gap(const Predictor& model, const Matrix& a, const Matrix& b) {
    if (model.head == Head::linear) {
        return std::abs(forward(model, a).at(0, 0) - forward(model, b).at(0, 0));
    }
    const Matrix pa = class_probabilities(model, a);
    const Matrix pb = class_probabilities(model, b);
    double l1 = 0.0;
    for (std::size_t j = 0; j < pa.cols(); ++j) l1 += std::abs(pa.at(0, j) - pb.at(0, j));
    return 0.5 * l1;
}

Dataset units_for_analysis(const DatasetSpec& family, std::size_t n_units,
                           std::uint64_t seed) {
    DatasetSpec spec = family;
    spec.n = n_units;
    spec.seed = SplitRng(seed).split("analysis_units").next_u64();
    spec.render = true;
    spec.label_noise = 0.0;  // analysis inspects the mechanisms, not noisy labels
    return generate(spec);
}

}  // namespace

double sensitivity(const Predictor& model, const DatasetSpec& family,
                   const std::string& variable, std::size_t n_units,
                   std::size_t n_interventions, std::uint64_t seed) {
    const auto supports = intervenable_variables(family);
    const InterventionSupport* sup = nullptr;
    for (const auto& s : supports) {
        if (s.name == variable) sup = &s;
    }
    if (sup == nullptr) {
        throw InputError("sensitivity: variable " + variable +
                         " is not intervenable in this family");
    }
    const Dataset ds = units_for_analysis(family, n_units, seed);
    SplitRng rng = SplitRng(seed).split("interventions");
    double acc = 0.0;
    std::size_t count = 0;
    for (const Unit& u : ds.units) {
        const Matrix base = one_row(u.features);
        for (std::size_t j = 0; j < n_interventions; ++j) {
            const double v = rng.uniform(sup->lo, sup->hi);
            const Unit cf = counterfactual(ds.spec, u, {{variable, v}});
            acc += prediction_gap(model, base, one_row(cf.features));
            ++count;
        }
    }
    return count > 0 ? acc / static_cast<double>(count) : 0.0;
}

double sensitivity_factual(const Predictor& model, const DatasetSpec& family,
                           const std::string& variable, std::size_t n_units,
                           std::uint64_t seed) {
    const Dataset ds = units_for_analysis(family, n_units, seed);
    double acc = 0.0;
    for (const Unit& u : ds.units) {
        const Unit cf = counterfactual(ds.spec, u, {{variable, u.endo(variable)}});
        acc += prediction_gap(model, one_row(u.features), one_row(cf.features));
    }
    return ds.n() > 0 ? acc / static_cast<double>(ds.n()) : 0.0;
}

double ctf_accuracy(const Predictor& model, const DatasetSpec& family, std::size_t n_units,
                    std::size_t n_interventions, std::uint64_t seed) {
    if (model.head != Head::logits) {
        throw CapabilityError("ctf_accuracy needs a classification model");
    }
    const TargetIntervention ti = target_intervention(family);
    const Dataset ds = units_for_analysis(family, n_units, seed);
    SplitRng rng = SplitRng(seed).split("target_interventions");
    double hits = 0.0;
    std::size_t count = 0;
    for (const Unit& u : ds.units) {
        for (std::size_t j = 0; j < n_interventions; ++j) {
            const double v = ti.discrete ? static_cast<double>(rng.uniform_int(ti.levels))
                                         : rng.uniform(ti.lo, ti.hi);
            const Unit cf = counterfactual(ds.spec, u, {{ti.name, v}});
            const double target = cf.endo(ds.target_name);
            const Matrix probs = class_probabilities(model, one_row(cf.features));
            std::size_t best = 0;
            for (std::size_t k = 1; k < probs.cols(); ++k) {
                if (probs.at(0, k) > probs.at(0, best)) best = k;
            }
            if (static_cast<double>(best) == target) hits += 1.0;
            ++count;
        }
    }
    return count > 0 ? hits / static_cast<double>(count) : 0.0;
}

double ctf_r2(const Predictor& model, const DatasetSpec& family, std::size_t n_units,
              std::size_t n_interventions, std::uint64_t seed) {
    if (model.head != Head::linear) {
        throw CapabilityError("ctf_r2 needs a regression model");
    }
    const TargetIntervention ti = target_intervention(family);
    if (ti.discrete) throw CapabilityError("ctf_r2 needs a continuous target");
    const Dataset ds = units_for_analysis(family, n_units, seed);
    SplitRng rng = SplitRng(seed).split("target_interventions");
    std::vector<double> drawn, predicted;
    for (const Unit& u : ds.units) {
        for (std::size_t j = 0; j < n_interventions; ++j) {
            const double v = rng.uniform(ti.lo, ti.hi);
            const Unit cf = counterfactual(ds.spec, u, {{ti.name, v}});
            drawn.push_back(cf.endo(ds.target_name));
            predicted.push_back(forward(model, one_row(cf.features)).at(0, 0));
        }
    }
    double mean = 0.0;
    for (const double v : drawn) mean += v;
    mean /= static_cast<double>(drawn.size());
    double ss_res = 0.0, ss_tot = 0.0;
    for (std::size_t i = 0; i < drawn.size(); ++i) {
        ss_res += (drawn[i] - predicted[i]) * (drawn[i] - predicted[i]);
        ss_tot += (drawn[i] - mean) * (drawn[i] - mean);
    }
    return ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : 0.0;
}

}  // namespace disco
