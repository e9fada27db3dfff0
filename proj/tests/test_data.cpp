#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "fedpgp/data.hpp"

using namespace fedpgp;

namespace {

TaskParams small_task() {
    TaskParams p;
    p.num_classes = 6;
    p.num_domains = 1;
    p.samples_per_class_per_domain = 10;
    p.d_img = 8;
    p.sigma = 0.2;
    return p;
}

// Exhaustive partition contract: disjoint shard indices covering exactly the
// training rows of the given label universe.
void check_partition(const SyntheticTask& task, const std::vector<DatasetShard>& shards,
                     const std::vector<int>& universe) {
    std::set<std::size_t> seen;
    for (const auto& shard : shards) {
        for (std::size_t idx : shard.indices) {
            CHECK(seen.insert(idx).second);  // disjoint
        }
    }
    std::size_t expected = 0;
    for (std::size_t idx : task.train_indices) {
        if (std::find(universe.begin(), universe.end(), task.samples[idx].label) !=
            universe.end()) {
            ++expected;
            CHECK(seen.count(idx) == 1);  // covered
        }
    }
    CHECK(seen.size() == expected);
}

double mean_label_entropy(const SyntheticTask& task, const std::vector<DatasetShard>& shards) {
    double total = 0.0;
    for (const auto& shard : shards) {
        std::vector<double> counts(std::size_t(task.num_classes), 0.0);
        for (std::size_t idx : shard.indices) counts[std::size_t(task.samples[idx].label)] += 1.0;
        double entropy = 0.0;
        for (double c : counts) {
            if (c == 0.0) continue;
            const double p = c / double(shard.indices.size());
            entropy -= p * std::log(p);
        }
        total += entropy;
    }
    return total / double(shards.size());
}

int nearest_prototype(const SyntheticTask& task, const Vector& x) {
    int best = 0;
    double best_dist = 1e300;
    for (int k = 0; k < task.num_classes; ++k) {
        double dist = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) {
            const double d = x[i] - task.prototypes[std::size_t(k)][i];
            dist += d * d;
        }
        if (dist < best_dist) {
            best_dist = dist;
            best = k;
        }
    }
    return best;
}

}  // namespace

TEST_CASE("sigma zero collapses every class-domain cell to one point") {
    TaskParams p = small_task();
    p.sigma = 0.0;
    const SyntheticTask task = generate_task(p, 3);
    for (const Sample& s : task.samples) {
        const Vector& proto = task.prototypes[std::size_t(s.label)];
        for (std::size_t i = 0; i < s.x.size(); ++i) CHECK(s.x[i] == proto[i]);
    }
}

TEST_CASE("task sample counts and split sizes") {
    TaskParams p = small_task();
    p.num_domains = 2;
    const SyntheticTask task = generate_task(p, 5);
    CHECK(task.samples.size() == std::size_t(6 * 2 * 10));
    CHECK(task.train_indices.size() + task.test_indices.size() == task.samples.size());
    // 10 per cell -> 8 train, 2 test.
    CHECK(task.train_indices.size() == std::size_t(6 * 2 * 8));
    CHECK(task.test_indices.size() == std::size_t(6 * 2 * 2));
}

TEST_CASE("task generation is deterministic per seed") {
    const TaskParams p = small_task();
    const SyntheticTask a = generate_task(p, 9);
    const SyntheticTask b = generate_task(p, 9);
    REQUIRE(a.samples.size() == b.samples.size());
    for (std::size_t i = 0; i < a.samples.size(); ++i) {
        CHECK(a.samples[i].x == b.samples[i].x);
        CHECK(a.samples[i].label == b.samples[i].label);
    }
}

TEST_CASE("separable preset admits a perfect nearest-prototype classifier") {
    TaskParams p = small_task();
    p.sigma = 0.05;
    p.separable = true;
    const SyntheticTask task = generate_task(p, 17);
    for (std::size_t idx : task.test_indices) {
        CHECK(nearest_prototype(task, task.samples[idx].x) == task.samples[idx].label);
    }
}

TEST_CASE("separable enforcement keeps prototypes at least 4 sigma apart") {
    TaskParams p = small_task();
    p.sigma = 3.0;  // would violate separation without rescaling
    const SyntheticTask task = generate_task(p, 21);
    double min_dist = 1e300;
    for (std::size_t i = 0; i < task.prototypes.size(); ++i) {
        for (std::size_t j = i + 1; j < task.prototypes.size(); ++j) {
            double dist = 0.0;
            for (std::size_t k = 0; k < p.d_img; ++k) {
                const double d = task.prototypes[i][k] - task.prototypes[j][k];
                dist += d * d;
            }
            min_dist = std::min(min_dist, std::sqrt(dist));
        }
    }
    CHECK(min_dist > 4.0 * p.sigma);
}

TEST_CASE("pathological partition spreads base classes round robin") {
    TaskParams p = small_task();
    p.num_classes = 20;  // 10 base
    const SyntheticTask task = generate_task(p, 2);
    const auto shards = pathological_partition(task, 5);
    REQUIRE(shards.size() == 5);
    for (const auto& shard : shards) CHECK(shard.class_set.size() == 2);

    // Union of class sets is exactly the base classes, pairwise disjoint.
    const BaseNovelSplit split = base_novel_split(task);
    std::set<int> all;
    for (const auto& shard : shards) {
        for (int c : shard.class_set) CHECK(all.insert(c).second);
    }
    CHECK(all == std::set<int>(split.base_classes.begin(), split.base_classes.end()));

    check_partition(task, shards, split.base_classes);
    CHECK_THROWS_AS(pathological_partition(task, 11), InvalidParameter);
}

TEST_CASE("pathological partition matches the ten-client reference shape") {
    TaskParams p = small_task();
    p.num_classes = 40;  // 20 base over 10 clients
    const SyntheticTask task = generate_task(p, 3);
    const auto shards = pathological_partition(task, 10);
    REQUIRE(shards.size() == 10);
    for (const auto& shard : shards) {
        CHECK(shard.class_set.size() == 2);
        CHECK(!shard.indices.empty());
    }
}

TEST_CASE("dirichlet partition assigns every training sample exactly once") {
    const TaskParams p = small_task();
    const SyntheticTask task = generate_task(p, 4);
    std::vector<int> universe;
    for (int k = 0; k < task.num_classes; ++k) universe.push_back(k);

    Rng rng(77);
    const auto shards = dirichlet_partition(task, 7, 0.3, rng);
    REQUIRE(shards.size() == 7);
    check_partition(task, shards, universe);
    for (const auto& shard : shards) CHECK(!shard.indices.empty());

    CHECK_THROWS_AS(dirichlet_partition(task, 7, 0.0, rng), InvalidParameter);
}

TEST_CASE("dirichlet label entropy grows with alpha") {
    TaskParams p = small_task();
    p.num_classes = 10;
    p.samples_per_class_per_domain = 30;
    const SyntheticTask task = generate_task(p, 6);

    const auto mean_entropy_at = [&](double alpha) {
        double total = 0.0;
        for (std::uint64_t seed = 0; seed < 20; ++seed) {
            Rng rng(seed);
            total += mean_label_entropy(task, dirichlet_partition(task, 8, alpha, rng));
        }
        return total / 20.0;
    };
    const double h01 = mean_entropy_at(0.1);
    const double h1 = mean_entropy_at(1.0);
    const double h10 = mean_entropy_at(10.0);
    CHECK(h01 <= h1);
    CHECK(h1 <= h10);
}

TEST_CASE("base novel split follows the ceiling rule") {
    TaskParams p = small_task();
    p.num_classes = 10;
    const SyntheticTask ten = generate_task(p, 1);
    const BaseNovelSplit s10 = base_novel_split(ten);
    CHECK(s10.base_classes.size() == 5);
    CHECK(s10.novel_classes.size() == 5);

    p.num_classes = 3;
    const SyntheticTask three = generate_task(p, 1);
    const BaseNovelSplit s3 = base_novel_split(three);
    CHECK(s3.base_classes == std::vector<int>{0, 1});
    CHECK(s3.novel_classes == std::vector<int>{2});
}

TEST_CASE("no pathological shard carries a novel label") {
    TaskParams p = small_task();
    p.num_classes = 9;
    const SyntheticTask task = generate_task(p, 8);
    const BaseNovelSplit split = base_novel_split(task);
    const auto shards = pathological_partition(task, 4);
    for (const auto& shard : shards) {
        for (std::size_t idx : shard.indices) {
            const int label = task.samples[idx].label;
            CHECK(std::find(split.novel_classes.begin(), split.novel_classes.end(), label) ==
                  split.novel_classes.end());
        }
    }
}

TEST_CASE("leave one domain out shapes and exclusions") {
    TaskParams p = small_task();
    p.num_domains = 4;
    const SyntheticTask four = generate_task(p, 11);
    const DomainHoldout h4 = leave_one_domain_out(four, 2, 3);
    REQUIRE(h4.shards.size() == 3);
    std::set<int> source_domains;
    for (const auto& shard : h4.shards) {
        REQUIRE(!shard.indices.empty());
        const int domain = four.samples[shard.indices.front()].domain;
        for (std::size_t idx : shard.indices) {
            CHECK(four.samples[idx].domain == domain);
            CHECK(four.samples[idx].domain != 2);
        }
        source_domains.insert(domain);
    }
    CHECK(source_domains == std::set<int>{0, 1, 3});
    for (std::size_t idx : h4.target_indices) CHECK(four.samples[idx].domain == 2);

    p.num_domains = 6;
    const SyntheticTask six = generate_task(p, 12);
    CHECK(leave_one_domain_out(six, 0, 5).shards.size() == 5);
    CHECK_THROWS_AS(leave_one_domain_out(six, 0, 4), InvalidParameter);
    CHECK_THROWS_AS(leave_one_domain_out(six, 6, 5), InvalidParameter);
}

TEST_CASE("iid partition is balanced and complete") {
    const TaskParams p = small_task();
    const SyntheticTask task = generate_task(p, 19);
    std::vector<int> universe;
    for (int k = 0; k < task.num_classes; ++k) universe.push_back(k);

    const auto shards = iid_partition(task, 4);
    check_partition(task, shards, universe);
    for (const auto& shard : shards) {
        CHECK(shard.class_set.size() == std::size_t(task.num_classes));
    }
}

TEST_CASE("shot cap limits per class training samples") {
    const TaskParams p = small_task();
    const SyntheticTask task = generate_task(p, 13);
    auto shards = iid_partition(task, 2);
    apply_shot_cap(shards, task, 3);
    for (const auto& shard : shards) {
        std::vector<int> counts(std::size_t(task.num_classes), 0);
        for (std::size_t idx : shard.indices) counts[std::size_t(task.samples[idx].label)] += 1;
        for (int c : counts) CHECK(c <= 3);
    }
}

TEST_CASE("task export and import round trip the samples") {
    TaskParams p = small_task();
    p.samples_per_class_per_domain = 4;
    const SyntheticTask task = generate_task(p, 14);
    const std::string text = export_task(task);
    const SyntheticTask back = import_task(text);
    REQUIRE(back.samples.size() == task.samples.size());
    for (std::size_t i = 0; i < task.samples.size(); ++i) {
        CHECK(back.samples[i].label == task.samples[i].label);
        CHECK(back.samples[i].domain == task.samples[i].domain);
        REQUIRE(back.samples[i].x.size() == task.samples[i].x.size());
        for (std::size_t j = 0; j < task.samples[i].x.size(); ++j) {
            CHECK(back.samples[i].x[j] == task.samples[i].x[j]);
        }
    }
}
