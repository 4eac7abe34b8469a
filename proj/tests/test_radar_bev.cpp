#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "rcdet/radar_bev.hpp"
#include "rcdet/rng.hpp"

using namespace rcdet;

namespace {

RadarPoints points_from(const std::vector<std::array<double, 6>>& rows) {
    RadarPoints pts;
    pts.pts.resize(static_cast<long>(rows.size()), RadarPoints::kColumns);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (int c = 0; c < 6; ++c) pts.pts(static_cast<long>(i), c) = rows[i][static_cast<std::size_t>(c)];
    }
    return pts;
}

void zero_additive_params(ParamStore& store) {
    for (const auto& [name, tensor] : store.items()) {
        const bool additive = name.ends_with(".b") || name.ends_with(".beta") ||
                              name.ends_with("pos_table");
        if (additive) {
            Tensor t = tensor;
            std::fill(t.raw_data().begin(), t.raw_data().end(), 0.0);
        }
    }
}

}  // namespace

TEST_CASE("bev grid spec derives from the world range") {
    WorldRange range;
    const BevGridSpec spec = BevGridSpec::from_range(range, 128, 128);
    CHECK(spec.cell_size == doctest::Approx(0.8));
    CHECK(spec.origin_x == doctest::Approx(-51.2));
    long row = -1, col = -1;
    CHECK(spec.cell_of(0.3, 0.3, row, col));
    CHECK(row == 64);
    CHECK(col == 64);
    CHECK_FALSE(spec.cell_of(99.0, 0.0, row, col));
    CHECK_THROWS_AS(BevGridSpec::from_range(range, 12, 12), ConfigError);  // not divisible by 8
}

TEST_CASE("pillarize") {
    ParamStore store;
    Rng rng(31);
    PillarNet net = PillarNet::create(store, "pillar", 6, 16, 8, rng);
    WorldRange range;
    const BevGridSpec spec = BevGridSpec::from_range(range, 32, 32);

    SUBCASE("zero points give an all-zero grid") {
        BevGrid grid = pillarize(points_from({}), spec, net);
        CHECK(grid.empty_fraction() == 1.0);
        for (double v : grid.features.data()) CHECK(v == 0.0);
        CHECK(grid.features.shape() == Shape{32, 32, 8});
    }

    SUBCASE("all-zero rows are padding and are skipped") {
        BevGrid grid = pillarize(points_from({{0, 0, 0, 0, 0, 0}, {0, 0, 0, 0, 0, 0}}), spec, net);
        CHECK(grid.empty_fraction() == 1.0);
        for (double v : grid.features.data()) CHECK(v == 0.0);
    }

    SUBCASE("two points in one cell max-pool their features") {
        const std::array<double, 6> p1 = {0.3, 0.3, 0.1, 1.0, -0.5, 0.0};
        const std::array<double, 6> p2 = {0.9, 0.5, -0.4, 0.2, 0.8, -0.05};
        BevGrid grid = pillarize(points_from({p1, p2}), spec, net);
        long r1, c1, r2, c2;
        REQUIRE(spec.cell_of(p1[0], p1[1], r1, c1));
        REQUIRE(spec.cell_of(p2[0], p2[1], r2, c2));
        REQUIRE(r1 == r2);
        REQUIRE(c1 == c2);
        // per-point features straight through the MLP
        auto augmented = [&](const std::array<double, 6>& p, long row, long col) {
            std::vector<double> in = {p[0] - spec.center_x(col), p[1] - spec.center_y(row),
                                      p[2], p[3], p[4], p[5]};
            return net.mlp.forward(Tensor::from_data({1, 6}, in));
        };
        Tensor f1 = augmented(p1, r1, c1);
        Tensor f2 = augmented(p2, r2, c2);
        for (long ch = 0; ch < 8; ++ch) {
            const double expect = std::max(f1.at({0, ch}), f2.at({0, ch}));
            CHECK(grid.features.at({r1, c1, ch}) == expect);  // bitwise
        }
        CHECK(grid.nonempty[static_cast<std::size_t>(r1 * 32 + c1)] == 1);
        CHECK(grid.empty_fraction() == doctest::Approx(1.0 - 1.0 / 1024.0));
    }

    SUBCASE("point order does not change the grid bitwise") {
        Rng prng(7);
        std::vector<std::array<double, 6>> rows;
        for (int i = 0; i < 40; ++i) {
            rows.push_back({prng.uniform(-40, 40), prng.uniform(-40, 40), prng.normal(),
                            prng.normal(), prng.normal(), -0.05 * static_cast<double>(i % 6)});
        }
        BevGrid a = pillarize(points_from(rows), spec, net);
        std::reverse(rows.begin(), rows.end());
        std::swap(rows[3], rows[17]);
        BevGrid b = pillarize(points_from(rows), spec, net);
        CHECK(a.features.data() == b.features.data());
        CHECK(a.nonempty == b.nonempty);
    }

    SUBCASE("translating points by whole cells shifts the grid") {
        Rng prng(8);
        std::vector<std::array<double, 6>> rows;
        for (int i = 0; i < 25; ++i) {
            rows.push_back({prng.uniform(-30, 20), prng.uniform(-30, 20), prng.normal(),
                            prng.normal(), prng.normal(), 0.0});
        }
        BevGrid a = pillarize(points_from(rows), spec, net);
        const long k = 3;
        std::vector<std::array<double, 6>> moved = rows;
        for (auto& r : moved) {
            r[0] += k * spec.cell_size;
            r[1] += k * spec.cell_size;
        }
        BevGrid b = pillarize(points_from(moved), spec, net);
        for (long row = 0; row + k < 32; ++row) {
            for (long col = 0; col + k < 32; ++col) {
                for (long ch = 0; ch < 8; ++ch) {
                    CHECK(b.features.at({row + k, col + k, ch}) ==
                          doctest::Approx(a.features.at({row, col, ch})).epsilon(1e-9));
                }
            }
        }
    }
}

TEST_CASE("radar dense encoder") {
    WorldRange range;

    RdeConfig cfg;
    cfg.c_in = 8;
    cfg.c1 = 16;
    cfg.c2 = 16;
    cfg.c3 = 16;
    cfg.c_out = 12;
    cfg.attn_heads = 2;
    cfg.attn_layers = 1;

    SUBCASE("output spatial size equals input spatial size") {
        for (long n : {16L, 32L}) {
            ParamStore store;
            Rng rng(41);
            RdeWeights w = RdeWeights::create(store, "rde", cfg, n, n, rng);
            BevGrid grid;
            grid.spec = BevGridSpec::from_range(range, n, n);
            Rng drng(42);
            std::vector<double> vals(static_cast<std::size_t>(n * n * cfg.c_in));
            for (double& v : vals) v = drng.normal();
            grid.features = Tensor::from_data({n, n, cfg.c_in}, std::move(vals));
            grid.nonempty.assign(static_cast<std::size_t>(n * n), 1);
            BevGrid out = rde_forward(grid, w);
            CHECK(out.features.shape() == Shape{n, n, cfg.c_out});
        }
    }

    SUBCASE("grid/weight size mismatch is a config error") {
        ParamStore store;
        Rng rng(43);
        RdeWeights w = RdeWeights::create(store, "rde", cfg, 16, 16, rng);
        BevGrid grid;
        grid.spec = BevGridSpec::from_range(range, 32, 32);
        grid.features = Tensor::zeros({32, 32, cfg.c_in});
        grid.nonempty.assign(1024, 0);
        CHECK_THROWS_AS(rde_forward(grid, w), ConfigError);
    }

    SUBCASE("zero input with zero additive parameters stays zero") {
        ParamStore store;
        Rng rng(44);
        RdeWeights w = RdeWeights::create(store, "rde", cfg, 16, 16, rng);
        zero_additive_params(store);
        BevGrid grid;
        grid.spec = BevGridSpec::from_range(range, 16, 16);
        grid.features = Tensor::zeros({16, 16, cfg.c_in});
        grid.nonempty.assign(256, 0);
        BevGrid out = rde_forward(grid, w);
        for (double v : out.features.data()) CHECK(v == 0.0);
    }

    SUBCASE("one pillar reaches every output cell through the attention") {
        ParamStore store;
        Rng rng(45);
        RdeWeights w = RdeWeights::create(store, "rde", cfg, 16, 16, rng);
        Rng drng(46);
        auto make_grid = [&]() {
            std::vector<double> vals(16 * 16 * static_cast<std::size_t>(cfg.c_in), 0.0);
            for (long ch = 0; ch < cfg.c_in; ++ch) {
                vals[static_cast<std::size_t>((5 * 16 + 9) * cfg.c_in + ch)] = drng.normal();
            }
            BevGrid grid;
            grid.spec = BevGridSpec::from_range(WorldRange{}, 16, 16);
            grid.features = Tensor::from_data({16, 16, cfg.c_in}, std::move(vals), true);
            grid.nonempty.assign(256, 0);
            grid.nonempty[5 * 16 + 9] = 1;
            return grid;
        };
        // probe a scattering of output cells; the acceptance suite sweeps all of them
        for (long cell : {0L, 17L, 100L, 200L, 255L}) {
            BevGrid grid = make_grid();
            BevGrid out = rde_forward(grid, w);
            Tensor flat = reshape(out.features, {256, cfg.c_out});
            Tensor probe = sum(gather_rows(flat, {cell}));
            backward(probe);
            const auto& g = grid.features.grad();
            double norm = 0.0;
            for (long ch = 0; ch < cfg.c_in; ++ch) {
                norm += std::abs(g[static_cast<std::size_t>((5 * 16 + 9) * cfg.c_in + ch)]);
            }
            CHECK(norm > 0.0);
        }
    }
}
