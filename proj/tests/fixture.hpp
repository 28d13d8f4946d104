#pragma once

#include <vector>

#include "sea/dataset.hpp"
#include "sea/model.hpp"

namespace sea::test {

// Small blobs dataset + 4-surrogate/2-target pool shared by a test binary.
// Built once; everything downstream is deterministic.
struct TinyWorld {
    Dataset dataset;
    ModelPool pool;
    EvalSet eval_set;
    Tensor x;
    std::vector<int> labels;
    std::vector<const Model*> surrogates;
};

inline const TinyWorld& tiny_world() {
    static const TinyWorld world = [] {
        TinyWorld w;
        w.dataset = generate_dataset(DataKind::Blobs, 600, 4, {1, 8, 8}, 21);
        ZooSpec zoo;
        zoo.surrogate_count = 4;
        zoo.target_count = 2;
        zoo.input = w.dataset.shape();
        zoo.classes = 4;
        TrainRecipe recipe;
        recipe.epochs = 8;
        w.pool = train_pool(zoo, w.dataset, 3, recipe);
        w.eval_set = build_eval_set(w.dataset, w.pool, 40, 5);
        w.x = w.dataset.gather_inputs(w.eval_set.indices);
        w.labels = w.dataset.gather_labels(w.eval_set.indices);
        for (const Model& m : w.pool.surrogates) w.surrogates.push_back(&m);
        return w;
    }();
    return world;
}

} // namespace sea::test
