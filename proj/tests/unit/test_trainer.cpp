#include <filesystem>
#include <fstream>

#include "caae/trainer.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace caae;
namespace fs = std::filesystem;

namespace {

ModelConfig small_model() {
    ModelConfig cfg;
    cfg.cluster_count = 6;
    cfg.style_dim = 4;
    cfg.patch_size = 32;
    cfg.conv_widths = {8, 16};
    cfg.disc_hidden = 32;
    return cfg;
}

TrainConfig small_train() {
    TrainConfig cfg;
    cfg.batch_size = 4;
    cfg.steps = 3;
    cfg.seed = 5;
    cfg.checkpoint_every = 2;
    return cfg;
}

TrainBatch random_batch(int n, const ModelConfig& m, std::uint64_t seed) {
    Rng rng(seed);
    TrainBatch b;
    b.a = oracle::random_tensor<float>({n, m.channels, m.patch_size, m.patch_size}, rng, 0.0, 1.0);
    b.b = oracle::random_tensor<float>({n, m.channels, m.patch_size, m.patch_size}, rng, 0.0, 1.0);
    return b;
}

fs::path temp_dir(const std::string& name) {
    auto dir = fs::temp_directory_path() / ("caae_trainer_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

GenConfig tiny_gen(int per_class) {
    GenConfig cfg;
    cfg.patch_size = 32;
    cfg.counts = {per_class, per_class, per_class};
    cfg.seed = 71;
    return cfg;
}

}  // namespace

TEST_CASE("reconstruction_target picks the mode's domain") {
    auto m = small_model();
    auto batch = random_batch(2, m, 1);
    CHECK(&reconstruction_target(batch, ReconMode::A2A) == &batch.a);
    CHECK(&reconstruction_target(batch, ReconMode::A2B) == &batch.b);
    TrainBatch only_a{batch.a, Tensor<float>{}};
    CHECK(&reconstruction_target(only_a, ReconMode::A2A) == &only_a.a);
    CHECK_THROWS_WITH_AS(reconstruction_target(only_a, ReconMode::A2B), doctest::Contains("domain-B"),
                         std::invalid_argument);
}

TEST_CASE("train_step touches exactly the collections of each stage") {
    auto m = small_model();
    auto t = small_train();
    auto params = init_params<float>(m, 11);
    OptStates opts;
    auto batch = random_batch(4, m, 2);

    for (int step = 0; step < 5; ++step) {
        const StageTrace::Snapshot before{params.encoder.content_hash(), params.decoder.content_hash(),
                                          params.disc_y.content_hash(), params.disc_z.content_hash()};
        StageTrace trace;
        train_step(params, opts, batch, m, t, step, &trace);

        // stage 1: encoder+decoder move, discriminators do not
        CHECK(trace.after_stage[0].encoder != before.encoder);
        CHECK(trace.after_stage[0].decoder != before.decoder);
        CHECK(trace.after_stage[0].disc_y == before.disc_y);
        CHECK(trace.after_stage[0].disc_z == before.disc_z);
        // stage 2: only the discriminators move
        CHECK(trace.after_stage[1].encoder == trace.after_stage[0].encoder);
        CHECK(trace.after_stage[1].decoder == trace.after_stage[0].decoder);
        CHECK(trace.after_stage[1].disc_y != before.disc_y);
        CHECK(trace.after_stage[1].disc_z != before.disc_z);
        // stage 3: only the encoder moves
        CHECK(trace.after_stage[2].encoder != trace.after_stage[1].encoder);
        CHECK(trace.after_stage[2].decoder == trace.after_stage[1].decoder);
        CHECK(trace.after_stage[2].disc_y == trace.after_stage[1].disc_y);
        CHECK(trace.after_stage[2].disc_z == trace.after_stage[1].disc_z);
    }
}

TEST_CASE("no gradient reaches the encoder while discriminators train") {
    auto m = small_model();
    auto params = init_params<float>(m, 13);
    auto batch = random_batch(4, m, 3);

    params.encoder.set_requires_grad(true);
    params.encoder.zero_grad();
    params.disc_y.set_requires_grad(true);
    params.disc_y.zero_grad();

    // the stage-2 construction: encoder outputs enter as constants
    auto codes = encode(params, batch.a, m);
    Graph<float> g;
    Rng rng(1);
    auto real = sample_prior_y<float>(4, m.cluster_count, rng);
    auto lr_real = discriminate_graph(g, params, LatentHead::y, g.input(real), m);
    auto lr_fake = discriminate_graph(g, params, LatentHead::y, g.input(codes.y), m);
    auto loss = g.add(g.bce_logits_loss(lr_real, g.input(Tensor<float>({4, 1}, 1.f))),
                      g.bce_logits_loss(lr_fake, g.input(Tensor<float>({4, 1}, 0.f))));
    g.backward(loss);

    for (const auto& item : params.encoder.items)
        for (float v : item.value.grad) CHECK(v == 0.f);
    bool disc_moved = false;
    for (const auto& item : params.disc_y.items)
        for (float v : item.value.grad) disc_moved = disc_moved || v != 0.f;
    CHECK(disc_moved);
}

TEST_CASE("non-finite losses roll the parameters back") {
    auto m = small_model();
    auto t = small_train();
    auto params = init_params<float>(m, 17);
    OptStates opts;
    auto batch = random_batch(4, m, 4);
    // poison one encoder weight so the forward pass explodes
    params.encoder.items[0].value.data[0] = std::numeric_limits<float>::infinity();
    const auto h = params.encoder.content_hash();

    CHECK_THROWS_WITH_AS(train_step(params, opts, batch, m, t, 0), doctest::Contains("rolled back"),
                         std::runtime_error);
    CHECK(params.encoder.content_hash() == h);
}

TEST_CASE("checkpoints round-trip bit-exactly and reject corruption") {
    auto m = small_model();
    auto t = small_train();
    auto params = init_params<float>(m, 19);
    OptStates opts;
    auto batch = random_batch(4, m, 5);
    for (int step = 0; step < 3; ++step) train_step(params, opts, batch, m, t, step);

    auto dir = temp_dir("ckpt");
    const auto path = dir / "test.caae";
    Checkpoint ckpt;
    ckpt.model = m;
    ckpt.train = t;
    ckpt.step = 3;
    ckpt.params = params;
    ckpt.opts = opts;
    save_checkpoint(ckpt, path);

    auto loaded = load_checkpoint(path);
    CHECK(loaded.step == 3);
    CHECK(loaded.model == m);
    for (int gidx = 0; gidx < 4; ++gidx)
        CHECK(loaded.params.groups()[gidx]->content_hash() == params.groups()[gidx]->content_hash());
    CHECK(loaded.opts.recon_enc.step == opts.recon_enc.step);
    CHECK(loaded.opts.adv_enc.m == opts.adv_enc.m);
    CHECK(loaded.opts.disc_z.v == opts.disc_z.v);

    // truncation -> error
    {
        std::ifstream in(path, std::ios::binary);
        std::string bytes((std::istreambuf_iterator<char>(in)), {});
        std::ofstream out(dir / "trunc.caae", std::ios::binary);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() - 48));
    }
    CHECK_THROWS_WITH_AS(load_checkpoint(dir / "trunc.caae"), doctest::Contains("truncated"), std::runtime_error);

    // bit flip in the payload -> checksum error
    {
        std::ifstream in(path, std::ios::binary);
        std::string bytes((std::istreambuf_iterator<char>(in)), {});
        bytes[bytes.size() - 10] = static_cast<char>(bytes[bytes.size() - 10] ^ 0x40);
        std::ofstream out(dir / "flip.caae", std::ios::binary);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    }
    CHECK_THROWS_WITH_AS(load_checkpoint(dir / "flip.caae"), doctest::Contains("checksum"), std::runtime_error);

    // architecture mismatch -> shape error
    auto other = m;
    other.cluster_count = 3;
    CHECK_THROWS_WITH_AS(load_checkpoint(path, &other), doctest::Contains("shapes would disagree"),
                         std::invalid_argument);

    fs::remove_all(dir);
}

TEST_CASE("train() is deterministic and resumes mid-stream exactly") {
    auto data_dir = temp_dir("data");
    auto ds = Dataset::load(gen_dataset(tiny_gen(6), data_dir));

    auto m = small_model();
    TrainConfig t = small_train();
    t.mode = ReconMode::A2B;
    t.steps = 8;
    t.checkpoint_every = 4;
    t.batch_size = 4;

    auto run_a = temp_dir("run_a");
    auto run_b = temp_dir("run_b");
    auto res_a = train(m, t, ds, run_a);
    auto res_b = train(m, t, ds, run_b);

    auto slurp = [](const fs::path& p) {
        std::ifstream in(p, std::ios::binary);
        return std::string((std::istreambuf_iterator<char>(in)), {});
    };
    CHECK(slurp(run_a / "losses.csv") == slurp(run_b / "losses.csv"));
    CHECK(slurp(res_a.final_checkpoint) == slurp(res_b.final_checkpoint));

    // resume from the midpoint checkpoint and compare the tail
    auto run_c = temp_dir("run_c");
    fs::copy(run_a / "ckpt_4.caae", run_c / "ckpt_4.caae");
    auto res_c = train(m, t, ds, run_c, run_c / "ckpt_4.caae");
    CHECK(res_c.log.size() == 4);
    for (std::size_t i = 0; i < 4; ++i) {
        CHECK(res_c.log[i].step == res_a.log[i + 4].step);
        CHECK(res_c.log[i].recon == res_a.log[i + 4].recon);
        CHECK(res_c.log[i].disc_y == res_a.log[i + 4].disc_y);
        CHECK(res_c.log[i].adv == res_a.log[i + 4].adv);
    }
    CHECK(slurp(res_c.final_checkpoint) == slurp(res_a.final_checkpoint));

    for (const auto& d : {data_dir, run_a, run_b, run_c}) fs::remove_all(d);
}

TEST_CASE("loss log holds finite values only") {
    auto data_dir = temp_dir("data_finite");
    auto ds = Dataset::load(gen_dataset(tiny_gen(4), data_dir));
    auto m = small_model();
    TrainConfig t = small_train();
    t.steps = 5;
    auto run = temp_dir("run_finite");
    auto res = train(m, t, ds, run);
    for (const auto& r : res.log) CHECK(r.all_finite());
    fs::remove_all(data_dir);
    fs::remove_all(run);
}

TEST_CASE("overfitting one fixed batch of 8 reaches tiny reconstruction error") {
    auto m = small_model();
    TrainConfig t;
    t.mode = ReconMode::A2A;
    t.batch_size = 8;
    t.lr_recon = 1e-3f;
    t.seed = 23;

    // one fixed batch of real synthetic patches
    GenConfig gen = tiny_gen(0);
    TrainBatch batch;
    batch.a = Tensor<float>({8, 3, 32, 32});
    for (int i = 0; i < 8; ++i) {
        Rng rng = derive_rng(gen.seed, "overfit", i);
        auto pair = gen_patch_pair(static_cast<TissueClass>(i % 3), gen, rng);
        const std::size_t plane = 32 * 32;
        for (int c = 0; c < 3; ++c)
            for (std::size_t px = 0; px < plane; ++px)
                batch.a.data[(static_cast<std::size_t>(i) * 3 + c) * plane + px] = pair.image_a.data[px * 3 + c];
    }

    auto params = init_params<float>(m, t.seed);
    OptStates opts;
    float last = 1.f;
    for (int step = 0; step < 500; ++step) last = train_step(params, opts, batch, m, t, step).recon;
    INFO("final reconstruction mse ", last);
    CHECK(last < 0.01f);
}
