#include "itp/agent.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <json.hpp>

#include "itp/errors.hpp"

namespace itp {

namespace {

// What the current phase of the task cares about.
struct Focus {
    std::vector<int> targets;
    int destination = -1;
    Fixture appliance = Fixture::plain;  // plain means none
    Verb op = Verb::noop;
    bool active = false;
};

Fixture fixture_for(SubgoalKind k) {
    switch (k) {
        case SubgoalKind::clean: return Fixture::sink;
        case SubgoalKind::heat: return Fixture::heater;
        case SubgoalKind::cool: return Fixture::cooler;
        case SubgoalKind::light:
        case SubgoalKind::examine: return Fixture::lamp;
        default: return Fixture::plain;
    }
}

Verb verb_for(SubgoalKind k) {
    switch (k) {
        case SubgoalKind::clean: return Verb::clean;
        case SubgoalKind::heat: return Verb::heat;
        case SubgoalKind::cool: return Verb::cool;
        case SubgoalKind::examine: return Verb::examine;
        default: return Verb::noop;
    }
}

Focus focus_of(const EnvState& s, const TaskSpec& t) {
    Focus f;
    const int done = satisfied_count(s);
    const auto& goals = t.goal.subgoals;
    if (done >= static_cast<int>(goals.size())) return f;
    f.active = true;
    if (t.family == Family::LAB_CHAIN) {
        const auto& g = goals[static_cast<std::size_t>(done)];
        f.targets = g.objects;
        f.destination = g.location;
        f.appliance = fixture_for(g.kind);
        f.op = verb_for(g.kind);
        return f;
    }
    f.targets = t.goal.targets;
    f.destination = t.goal.destination;
    for (const auto& g : goals) {
        if (f.appliance == Fixture::plain) f.appliance = fixture_for(g.kind);
        if (f.op == Verb::noop) f.op = verb_for(g.kind);
    }
    return f;
}

std::uint8_t attr_for(Verb v) {
    switch (v) {
        case Verb::clean: return attr::clean;
        case Verb::heat: return attr::hot;
        case Verb::cool: return attr::cold;
        case Verb::examine: return attr::examined;
        default: return 0;
    }
}

bool contains(const std::vector<int>& v, int x) { return std::find(v.begin(), v.end(), x) != v.end(); }

enum class Phase : std::uint8_t { none, fetch, operate, deliver };

struct Need {
    Phase phase = Phase::none;
    std::vector<int> locations;
};

// Locations the current phase has to reach next: an unplaced target while the
// hands hold none, an appliance of the required kind while the held target
// still lacks its attribute (or the light is off), the destination otherwise.
Need needed_locations(const EnvState& s, const TaskSpec& t, const Focus& f) {
    Need n;
    if (!f.active) return n;
    const bool holding_target = s.holding >= 0 && contains(f.targets, s.holding);
    if (!holding_target) {
        n.phase = Phase::fetch;
        for (int o : f.targets) {
            const int l = s.object_locations[static_cast<std::size_t>(o)];
            if (l >= 0 && l != f.destination && !contains(n.locations, l)) n.locations.push_back(l);
        }
        return n;
    }
    bool operate = false;
    if (f.appliance == Fixture::lamp)
        operate = !s.light_on;
    else if (f.op != Verb::noop && f.appliance != Fixture::plain)
        operate = (s.object_attrs[static_cast<std::size_t>(s.holding)] & attr_for(f.op)) == 0;
    if (operate) {
        n.phase = Phase::operate;
        for (std::size_t l = 0; l < t.fixtures.size(); ++l)
            if (t.fixtures[l] == f.appliance) n.locations.push_back(static_cast<int>(l));
        return n;
    }
    if (f.destination >= 0) {
        n.phase = Phase::deliver;
        n.locations.push_back(f.destination);
    }
    return n;
}

bool has_object_arg(Verb v) { return v != Verb::goto_ && v != Verb::toggle && v != Verb::noop; }

std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace

AgentParams AgentParams::zeros(int K_max, double temperature) {
    AgentParams p;
    p.K_max = K_max;
    p.temperature = temperature;
    p.action_weights.assign(af::size, 0.0);
    p.k_weights.assign(static_cast<std::size_t>(K_max + 1) * sf::size, 0.0);
    p.value_weights.assign(sf::size, 0.0);
    return p;
}

void apply_foresight_prior(AgentParams& p, const ForesightPrior& prior) {
    p.action_weights[af::agrees] = prior.agrees;
    p.action_weights[af::reaches_goal] = prior.reaches_goal;
    p.action_weights[af::conflict] = prior.conflict;
    p.action_weights[af::progress_delta] = prior.progress_delta;
}

FeatureVector encode_state(const EnvState& s, const TaskSpec& t) {
    FeatureVector fv;
    auto& x = fv.values;
    x.assign(sf::size, 0.0);
    x[sf::bias] = 1.0;
    x[sf::family + static_cast<int>(t.family)] = 1.0;
    if (s.holding >= 0) {
        x[sf::holding_any] = 1.0;
        if (contains(t.goal.targets, s.holding)) x[sf::holding_target] = 1.0;
    }
    constexpr std::uint8_t bits[4] = {attr::clean, attr::cold, attr::examined, attr::hot};
    for (int b = 0; b < 4; ++b) {
        if (!(t.goal.required_attr & bits[b])) continue;
        for (int o : t.goal.targets)
            if (s.object_attrs[static_cast<std::size_t>(o)] & bits[b]) x[sf::goal_attr + b] = 1.0;
    }
    x[sf::progress] = subgoal_progress(s, t);
    x[sf::step_frac] = t.max_steps > 0 ? static_cast<double>(s.step_count) / t.max_steps : 0.0;
    x[sf::light_on] = s.light_on ? 1.0 : 0.0;
    const auto& here = t.locations[static_cast<std::size_t>(s.agent_location)];
    const Fixture fx = t.fixtures[static_cast<std::size_t>(s.agent_location)];
    if (fx == Fixture::hallway) x[sf::at_hallway] = 1.0;
    if (fx != Fixture::hallway && fx != Fixture::plain) x[sf::at_appliance] = 1.0;
    x[sf::location_hash + static_cast<int>(fnv1a(here) % sf::location_buckets)] = 1.0;
    return fv;
}

FeatureVector encode_action_context(const EnvState& s, const TaskSpec& t, const Action& a,
                                    const std::optional<ReflectionSummary>& summary) {
    FeatureVector fv = encode_state(s, t);
    auto& x = fv.values;
    x.resize(af::size, 0.0);
    x[af::verb + static_cast<int>(a.verb)] = 1.0;

    const Focus f = focus_of(s, t);
    const bool obj_arg = has_object_arg(a.verb) && a.arg0 >= 0;
    if (obj_arg) {
        if (contains(f.targets, a.arg0))
            x[af::obj_is_focus] = 1.0;
        else
            x[af::obj_is_distractor] = 1.0;
    }
    const auto placed = [&](int o) {
        return f.destination >= 0 && s.object_locations[static_cast<std::size_t>(o)] == f.destination;
    };
    if (a.verb == Verb::goto_ && a.arg0 >= 0) {
        const auto need = needed_locations(s, t, f);
        const Fixture fx = t.fixtures[static_cast<std::size_t>(a.arg0)];
        if (contains(need.locations, a.arg0)) {
            if (need.phase == Phase::fetch) x[af::goto_focus_object] = 1.0;
            if (need.phase == Phase::deliver) x[af::goto_destination] = 1.0;
            if (need.phase == Phase::operate) x[af::goto_appliance] = 1.0;
        }
        if (need.phase == Phase::operate && contains(need.locations, s.agent_location)) x[af::leave_appliance] = 1.0;
        if (fx == Fixture::hallway && !need.locations.empty() &&
            std::none_of(need.locations.begin(), need.locations.end(), [&](int l) {
                return l != s.agent_location && adjacent(t, s.agent_location, l) &&
                       t.fixtures[static_cast<std::size_t>(l)] != Fixture::hallway;
            }))
            x[af::goto_hallway] = 1.0;
    }
    if (a.verb == Verb::put) {
        if (a.arg1 == f.destination && f.destination >= 0)
            x[af::put_at_destination] = 1.0;
        else if (contains(f.targets, a.arg0))
            x[af::put_elsewhere] = 1.0;
    }
    if (f.active && a.verb == f.op && contains(f.targets, a.arg0)) x[af::op_matches_goal] = 1.0;
    if (a.verb == Verb::toggle && f.appliance == Fixture::lamp && !s.light_on) x[af::op_matches_goal] = 1.0;
    if (obj_arg && attr_for(a.verb) && (s.object_attrs[static_cast<std::size_t>(a.arg0)] & attr_for(a.verb)))
        x[af::redundant_op] = 1.0;
    if (a.verb == Verb::toggle && s.light_on) x[af::redundant_op] = 1.0;
    if (a.verb == Verb::take && contains(f.targets, a.arg0) && placed(a.arg0)) x[af::take_back_placed] = 1.0;

    if (summary) {
        const bool agree = summary->first_imagined_action && *summary->first_imagined_action == a;
        const double sign = agree ? 1.0 : -1.0;
        x[af::agrees] = agree ? 1.0 : 0.0;
        x[af::reaches_goal] = summary->reaches_goal ? sign : 0.0;
        x[af::conflict] = summary->conflict_flag ? sign : 0.0;
        x[af::progress_delta] = sign * summary->progress_delta;
        // Neutral summaries (nothing imagined) must encode as all zeros.
        if (!summary->first_imagined_action) {
            x[af::reaches_goal] = x[af::conflict] = x[af::progress_delta] = 0.0;
        }
    }
    return fv;
}

double dot(std::span<const double> a, std::span<const double> b) {
    double acc = 0.0;
    const std::size_t n = std::min(a.size(), b.size());
    for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
    return acc;
}

double softmax_inplace(std::vector<double>& z) {
    const double m = *std::max_element(z.begin(), z.end());
    double sum = 0.0;
    for (double& v : z) {
        v = std::exp(v - m);
        sum += v;
    }
    for (double& v : z) v /= sum;
    return m + std::log(sum);
}

std::size_t PolicyEval::index_of(const Action& a) const {
    for (std::size_t i = 0; i < actions.size(); ++i)
        if (actions[i] == a) return i;
    return actions.size();
}

PolicyEval policy_distribution(const AgentParams& params, const EnvState& state, const TaskSpec& task,
                               const std::optional<ReflectionSummary>& summary) {
    PolicyEval ev;
    ev.actions = admissible_actions(state, task);
    if (ev.actions.empty()) throw NoAdmissibleActions("no admissible actions");
    ev.features.reserve(ev.actions.size());
    for (const auto& a : ev.actions) {
        ev.features.push_back(encode_action_context(state, task, a, summary));
        ev.logits.push_back(dot(params.action_weights, ev.features.back().values) / params.temperature);
    }
    ev.probs = ev.logits;
    softmax_inplace(ev.probs);
    return ev;
}

std::vector<double> k_distribution(const AgentParams& params, std::span<const double> x) {
    std::vector<double> z(static_cast<std::size_t>(params.K_max + 1));
    for (int k = 0; k <= params.K_max; ++k) z[static_cast<std::size_t>(k)] = dot(params.k_row(k), x);
    softmax_inplace(z);
    return z;
}

std::vector<double> k_distribution(const AgentParams& params, const EnvState& state, const TaskSpec& task) {
    return k_distribution(params, encode_state(state, task).values);
}

double value(const AgentParams& params, const EnvState& state, const TaskSpec& task) {
    return dot(params.value_weights, encode_state(state, task).values);
}

double log_prob_action(const AgentParams& params, const EnvState& state, const TaskSpec& task,
                       const std::optional<ReflectionSummary>& summary, const Action& action) {
    if (!is_valid(state, action, task)) throw InadmissibleAction(action_string(action, task));
    const auto ev = policy_distribution(params, state, task, summary);
    std::vector<double> z = ev.logits;
    const double lse = softmax_inplace(z);
    return ev.logits[ev.index_of(action)] - lse;
}

void accumulate_log_prob_grad(const PolicyEval& ev, std::size_t idx, double temperature, double scale,
                              std::span<double> grad) {
    const double c = scale / temperature;
    const auto& chosen = ev.features[idx].values;
    for (std::size_t j = 0; j < chosen.size(); ++j) grad[j] += c * chosen[j];
    for (std::size_t i = 0; i < ev.actions.size(); ++i) {
        const double w = c * ev.probs[i];
        const auto& f = ev.features[i].values;
        for (std::size_t j = 0; j < f.size(); ++j) grad[j] -= w * f[j];
    }
}

void accumulate_k_log_prob_grad(std::span<const double> x, std::span<const double> p, int k, double scale,
                                std::span<double> grad) {
    for (std::size_t j = 0; j < p.size(); ++j) {
        const double c = scale * ((static_cast<int>(j) == k ? 1.0 : 0.0) - p[j]);
        double* row = grad.data() + j * x.size();
        for (std::size_t i = 0; i < x.size(); ++i) row[i] += c * x[i];
    }
}

double entropy(std::span<const double> p) {
    double h = 0.0;
    for (double v : p)
        if (v > 0.0) h -= v * std::log(v);
    return h;
}

void accumulate_k_entropy_grad(std::span<const double> x, std::span<const double> p, double scale,
                               std::span<double> grad) {
    const double h = entropy(p);
    for (std::size_t j = 0; j < p.size(); ++j) {
        if (p[j] <= 0.0) continue;
        const double c = -scale * p[j] * (std::log(p[j]) + h);
        double* row = grad.data() + j * x.size();
        for (std::size_t i = 0; i < x.size(); ++i) row[i] += c * x[i];
    }
}

std::string params_to_json(const AgentParams& p, const std::string& config_hash) {
    nlohmann::json j;
    j["format"] = "itp-agent";
    j["encoder_version"] = p.encoder_version;
    j["K_max"] = p.K_max;
    j["temperature"] = p.temperature;
    j["config_hash"] = config_hash;
    j["action_weights"] = p.action_weights;
    j["k_weights"] = p.k_weights;
    j["value_weights"] = p.value_weights;
    return j.dump();
}

AgentParams params_from_json(const std::string& text, std::string* config_hash) {
    const auto j = nlohmann::json::parse(text);
    if (j.value("format", "") != "itp-agent") throw ConfigError("not an agent checkpoint");
    AgentParams p;
    p.encoder_version = j.at("encoder_version").get<int>();
    if (p.encoder_version != kEncoderVersion)
        throw ConfigError("checkpoint encoder_version " + std::to_string(p.encoder_version) + " != " +
                          std::to_string(kEncoderVersion));
    p.K_max = j.at("K_max").get<int>();
    p.temperature = j.at("temperature").get<double>();
    p.action_weights = j.at("action_weights").get<std::vector<double>>();
    p.k_weights = j.at("k_weights").get<std::vector<double>>();
    p.value_weights = j.at("value_weights").get<std::vector<double>>();
    if (p.action_weights.size() != af::size || p.value_weights.size() != sf::size ||
        p.k_weights.size() != static_cast<std::size_t>(p.K_max + 1) * sf::size)
        throw ConfigError("checkpoint weight shapes do not match encoder");
    if (config_hash) *config_hash = j.value("config_hash", "");
    return p;
}

}  // namespace itp
