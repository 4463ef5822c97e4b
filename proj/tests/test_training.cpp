#include "oracles.hpp"

#include <sdn/datagen.hpp>
#include <sdn/error.hpp>
#include <sdn/training.hpp>

#include <doctest.h>

#include <cmath>

using namespace sdn;

namespace {

std::vector<Tensor*> single(Tensor& t)
{
    return {&t};
}

TrainingConfig small_config(int epochs)
{
    TrainingConfig c;
    c.epochs_phase1 = epochs;
    c.epochs_phase2 = 0;
    c.batch_size = 2;
    c.points_per_shape = 64;
    c.seed = 12;
    c.threads = 1;
    return c;
}

std::vector<TrainingItem> posed_items(const ArticulatedTemplate& t, int n)
{
    std::vector<TrainingItem> items;
    for (int i = 0; i < n; ++i) {
        const Points p = pose_shape(t, sample_pose(t, PoseBounds{}, 100 + static_cast<std::uint64_t>(i))).vertices();
        items.push_back({PointCloud(p), p});
    }
    return items;
}

} // namespace

TEST_SUITE("training")
{
    TEST_CASE("adam with a zero gradient leaves parameters alone")
    {
        Tensor p = Tensor::vector({1.0, -2.0});
        AdamState s;
        const std::vector<Matrix> g{Matrix::Zero(1, 2)};
        adam_step(s, single(p), g);
        CHECK(p.mat() == Matrix{{1.0, -2.0}});
        CHECK(s.step == 1);
    }

    TEST_CASE("first adam step is the bias-corrected sign step")
    {
        Tensor p = Tensor::scalar(0.0);
        AdamState s;
        s.lr = 0.1;
        const std::vector<Matrix> g{Matrix::Constant(1, 1, 1.0)};
        adam_step(s, single(p), g);
        // m_hat = v_hat = g = 1 at t = 1.
        CHECK(std::abs(p.item() - (-0.1 / (1.0 + 1e-8))) < 1e-15);
    }

    TEST_CASE("adam converges on a convex quadratic")
    {
        Tensor p = Tensor::scalar(0.0);
        AdamState s;
        s.lr = 0.1;
        for (int i = 0; i < 1000; ++i) {
            const std::vector<Matrix> g{Matrix::Constant(1, 1, 2.0 * (p.item() - 3.0))};
            adam_step(s, single(p), g);
        }
        CHECK(std::abs(p.item() - 3.0) < 1e-3);
    }

    TEST_CASE("adam rejects bad gradients without touching state")
    {
        Tensor p = Tensor::vector({1.0, 2.0});
        AdamState s;
        adam_step(s, single(p), std::vector<Matrix>{Matrix::Constant(1, 2, 0.5)});
        const Tensor before = p;
        const AdamState saved = s;
        CHECK_THROWS_AS(adam_step(s, single(p), std::vector<Matrix>{Matrix{{1.0, std::nan("")}}}), NonFiniteValue);
        CHECK(bitwise_equal(p, before));
        CHECK(s.step == saved.step);
        CHECK(s.m[0] == saved.m[0]);
        CHECK_THROWS_AS(adam_step(s, single(p), std::vector<Matrix>{Matrix::Zero(2, 1)}), ShapeMismatch);
    }

    TEST_CASE("configuration checks and names")
    {
        CHECK_NOTHROW(TrainingConfig{}.validate());
        TrainingConfig c;
        c.batch_size = 0;
        CHECK_THROWS_AS(c.validate(), PreconditionError);
        c = TrainingConfig{};
        c.lr_phase2 = 0.0;
        CHECK_THROWS_AS(c.validate(), PreconditionError);
        CHECK(parse_training_mode("unsupervised") == TrainingMode::unsupervised);
        CHECK_THROWS_AS(parse_training_mode("semi"), PreconditionError);
    }

    TEST_CASE("overfitting the template itself")
    {
        const auto t = make_template(TemplateKind::biped, 0);
        const std::vector<TrainingItem> items{{t.mesh.vertex_cloud(), t.mesh.vertices()}};
        TrainingConfig c = small_config(5);
        c.points_per_shape = t.mesh.num_vertices();
        const auto r = train(t.mesh, items, c, init_params(4));
        REQUIRE(r.log.size() == 5);
        CHECK(r.log.back().mean_loss < r.log.front().mean_loss);
    }

    TEST_CASE("single-shape loss decreases over epochs without jitter")
    {
        // Adam at lr 1e-3 on one shape is not strictly monotone epoch to epoch
        // (single-epoch upticks occur), so the trend is checked on 4-epoch means.
        const auto t = make_template(TemplateKind::biped, 0);
        const Points target = pose_shape(t, sample_pose(t, PoseBounds{}, 9)).vertices();
        const std::vector<TrainingItem> items{{PointCloud(target), target}};
        TrainingConfig c = small_config(20);
        c.points_per_shape = t.mesh.num_vertices();
        c.translation_jitter = 0.0;
        const auto r = train(t.mesh, items, c, init_params(5));
        std::vector<double> window;
        for (std::size_t i = 0; i + 4 <= r.log.size(); i += 4) {
            window.push_back((r.log[i].mean_loss + r.log[i + 1].mean_loss + r.log[i + 2].mean_loss +
                              r.log[i + 3].mean_loss) / 4.0);
        }
        for (std::size_t i = 1; i < window.size(); ++i) CHECK(window[i] < window[i - 1]);
        int upticks = 0;
        for (std::size_t i = 1; i < r.log.size(); ++i) upticks += r.log[i].mean_loss > r.log[i - 1].mean_loss;
        MESSAGE("epoch-to-epoch increases: " << upticks << " of " << r.log.size() - 1);
    }

    TEST_CASE("training is deterministic and independent of the worker count")
    {
        const auto t = make_template(TemplateKind::tube, 0);
        const auto items = posed_items(t, 3);
        TrainingConfig c = small_config(1);
        c.epochs_phase2 = 1;
        const auto a = train(t.mesh, items, c, init_params(6));
        const auto b = train(t.mesh, items, c, init_params(6));
        c.threads = 3;
        const auto m = train(t.mesh, items, c, init_params(6));
        REQUIRE(a.log.size() == 2);
        CHECK(a.log[1].phase == 2);
        for (std::size_t i = 0; i < a.log.size(); ++i) {
            CHECK(a.log[i].mean_loss == b.log[i].mean_loss);
            CHECK(a.log[i].mean_loss == m.log[i].mean_loss);
        }
        const auto ta = a.params.named_tensors(), tb = b.params.named_tensors(), tm = m.params.named_tensors();
        for (std::size_t i = 0; i < ta.size(); ++i) {
            CHECK(bitwise_equal(*ta[i].second, *tb[i].second));
            CHECK(bitwise_equal(*ta[i].second, *tm[i].second));
        }
        CHECK(a.params.metadata["config_hash"] == b.params.metadata["config_hash"]);
    }

    TEST_CASE("unsupervised training runs and stays finite")
    {
        const auto t = make_template(TemplateKind::tube, 0);
        auto items = posed_items(t, 2);
        for (auto& item : items) item.targets.reset();
        TrainingConfig c = small_config(2);
        c.mode = TrainingMode::unsupervised;
        const auto r = train(t.mesh, items, c, init_params(7));
        for (const auto& e : r.log) CHECK(std::isfinite(e.mean_loss));
    }

    TEST_CASE("data errors")
    {
        const auto t = make_template(TemplateKind::tube, 0);
        auto items = posed_items(t, 2);
        items[1].targets.reset();
        CHECK_THROWS_AS(train(t.mesh, items, small_config(1), init_params(1)), DataError);
        items[1].targets = Points(oracle::random_points(5, 1));
        CHECK_THROWS_AS(train(t.mesh, items, small_config(1), init_params(1)), DataError);
        CHECK_THROWS_AS(train(t.mesh, std::vector<TrainingItem>{}, small_config(1), init_params(1)),
                        PreconditionError);
    }

    TEST_CASE("loss log csv")
    {
        const auto dir = oracle::scratch_dir("loss_csv");
        write_loss_csv({{1, 1, 0.5}, {2, 2, 0.25}}, dir / "loss.csv");
        CHECK(oracle::read_file(dir / "loss.csv") == "epoch,phase,mean_loss\n1,1,0.5\n2,2,0.25\n");
    }
}
