#pragma once

#include <cstdint>
#include <vector>

#include "rffi/receiver.hpp"

namespace rffi::data {

using receiver::Example;

struct Dataset {
    std::vector<Example> examples;
    int n_classes = 0;

    std::size_t size() const { return examples.size(); }
    bool empty() const { return examples.empty(); }

    static Dataset from(const receiver::PreprocessedSet& set) {
        Dataset ds;
        ds.examples = set.examples;
        ds.n_classes = set.n_devices;
        return ds;
    }

    Dataset filter_day(int day) const {
        Dataset out;
        out.n_classes = n_classes;
        for (const auto& ex : examples)
            if (ex.day_index == day) out.examples.push_back(ex);
        return out;
    }

    // Deterministic class-balanced subset (first k of each label in order).
    Dataset balanced_head(std::size_t per_class) const {
        Dataset out;
        out.n_classes = n_classes;
        std::vector<std::size_t> counts(std::size_t(n_classes), 0);
        for (const auto& ex : examples) {
            auto& c = counts[std::size_t(ex.y)];
            if (c < per_class) {
                out.examples.push_back(ex);
                ++c;
            }
        }
        return out;
    }

    std::vector<const Tensor*> xs() const {
        std::vector<const Tensor*> out;
        out.reserve(examples.size());
        for (const auto& ex : examples) out.push_back(&ex.x);
        return out;
    }

    std::vector<int> labels() const {
        std::vector<int> out;
        out.reserve(examples.size());
        for (const auto& ex : examples) out.push_back(ex.y);
        return out;
    }
};

}  // namespace rffi::data
