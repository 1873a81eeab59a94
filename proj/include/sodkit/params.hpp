#pragma once

#include <map>
#include <random>

#include "sodkit/ops.hpp"

namespace sodkit {

// Deterministic RNG; all draws go through u01() so streams are identical
// across standard library implementations.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}

    double uniform() { return u01(eng_()); }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    int uniform_int(int lo, int hi) {  // inclusive bounds
        return lo + static_cast<int>(uniform() * (hi - lo + 1));
    }

    double normal() {
        // Box-Muller, no spare caching so the stream stays position-independent
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    std::uint64_t raw() { return eng_(); }

  private:
    std::mt19937_64 eng_;
};

// Named parameter registry. Iteration order is the lexicographic name order,
// which makes optimizer steps and checkpoints deterministic.
class ParamStore {
  public:
    struct Entry {
        Value value;
        bool trainable = true;
    };

    Value param(const std::string& name, Shape shape, Rng& rng, double stddev) {
        auto v = make_value(std::move(shape), true);
        if (stddev > 0.0)
            for (auto& d : v->data) d = stddev * rng.normal();
        insert(name, {v, true});
        return v;
    }

    Value param_const(const std::string& name, Shape shape, double fill) {
        auto v = make_value(std::move(shape), true);
        std::fill(v->data.begin(), v->data.end(), fill);
        insert(name, {v, true});
        return v;
    }

    Value buffer(const std::string& name, Shape shape, double fill) {
        auto v = make_value(std::move(shape), false);
        std::fill(v->data.begin(), v->data.end(), fill);
        insert(name, {v, false});
        return v;
    }

    void zero_grads() {
        for (auto& [name, e] : entries_)
            if (e.trainable) e.value->zero_grad();
    }

    const std::map<std::string, Entry>& entries() const { return entries_; }
    std::map<std::string, Entry>& entries() { return entries_; }

    bool has(const std::string& name) const { return entries_.count(name) != 0; }

    const Value& at(const std::string& name) const {
        auto it = entries_.find(name);
        if (it == entries_.end()) throw ValidationError("unknown parameter: " + name);
        return it->second.value;
    }

  private:
    void insert(const std::string& name, Entry e) {
        if (!entries_.emplace(name, std::move(e)).second)
            throw ValidationError("duplicate parameter name: " + name);
    }

    std::map<std::string, Entry> entries_;
};

// Adam over a ParamStore with per-prefix learning-rate groups. A parameter
// belongs to the first group whose prefix matches its name.
class AdamOptimizer {
  public:
    struct Group {
        std::string prefix;
        double lr;
    };

    void step(ParamStore& store, const std::vector<Group>& groups) {
        for (auto& [name, e] : store.entries()) {
            if (!e.trainable) continue;
            double lr = -1.0;
            for (const auto& g : groups)
                if (name.rfind(g.prefix, 0) == 0) {
                    lr = g.lr;
                    break;
                }
            if (lr < 0.0) throw ConfigError("no learning-rate group matches parameter " + name);
            if (lr == 0.0) continue;  // frozen group: not even moment updates
            e.value->ensure_grad();
            adam_step(e.value->data, e.value->grad, states_[name], lr);
        }
    }

  private:
    std::map<std::string, AdamState> states_;
};

}  // namespace sodkit
