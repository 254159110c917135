#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "fswap/image_io.hpp"
#include "fswap/inference.hpp"

using namespace fswap;
namespace fs = std::filesystem;

namespace {

// Random-weights bundle: swaps are garbage but the pipeline is exercised
// end to end, deterministically.
ModelBundle random_bundle() {
    TrainConfig cfg;
    cfg.image_size = 32;
    cfg.model_channels = 4;
    cfg.cond_dim = 32;
    cfg.clip_dim = 16;
    cfg.id_dim = 8;
    cfg.attn_dim = 4;
    cfg.timesteps = 100;
    cfg.seed = 2;
    return build_bundle(cfg);
}

SwapRequest toy_request(int src_id, int tar_id, std::uint64_t seed, int n_steps = 5) {
    ToyFactorSpec s;
    s.style_seed = 808;
    s.identity = src_id;
    s.instance_seed = 11 + src_id;
    s.pose_deg = 10;
    auto src = render_toy_face(s, 32);
    s.identity = tar_id;
    s.instance_seed = 77 + tar_id;
    s.pose_deg = -8;
    s.expression = 0.5;
    auto tar = render_toy_face(s, 32);
    SwapRequest rq;
    rq.x_src = src.image;
    rq.x_tar = tar.image;
    rq.labels_src = src.labels;
    rq.labels_tar = tar.labels;
    rq.lm_tar = tar.landmarks;
    rq.n_steps = n_steps;
    rq.seed = seed;
    return rq;
}

}  // namespace

TEST_CASE("parse_mask_preset: named presets and custom category lists") {
    std::vector<int> custom;
    CHECK(parse_mask_preset("face", &custom) == MaskPreset::face);
    CHECK(parse_mask_preset("head", &custom) == MaskPreset::head);
    CHECK(parse_mask_preset("custom=1,4,15", &custom) == MaskPreset::custom);
    CHECK(custom == std::vector<int>{1, 4, 15});
    CHECK_THROWS_AS(parse_mask_preset("torso", &custom), SchemaError);
    CHECK_THROWS_AS(parse_mask_preset("custom=", &custom), SchemaError);
    CHECK_THROWS_AS(parse_mask_preset("custom=1,x", &custom), SchemaError);
}

TEST_CASE("swap: same seed and request give a bitwise-identical image") {
    ModelBundle b = random_bundle();
    SwapRequest rq = toy_request(0, 1, 42);
    Tensor a = swap(b, rq);
    Tensor c = swap(b, rq);
    CHECK(a.digest() == c.digest());
    CHECK(a.shape() == Shape{3, 32, 32});
    CHECK(a.array().minCoeff() >= 0.0);
    CHECK(a.array().maxCoeff() <= 1.0);

    rq.seed = 43;
    Tensor d = swap(b, rq);
    CHECK(a.digest() != d.digest());
}

TEST_CASE("swap: validation errors") {
    ModelBundle b = random_bundle();
    SwapRequest rq = toy_request(0, 1, 1);
    rq.n_steps = 0;
    CHECK_THROWS_AS(swap(b, rq), RangeError);
    rq.n_steps = 101;  // above T
    CHECK_THROWS_AS(swap(b, rq), RangeError);

    rq = toy_request(0, 1, 1);
    rq.preset = MaskPreset::custom;
    rq.custom_categories = {kHat};  // identity 1 of this style seed has no hat pixels
    bool face_has_hat = (toy_request(0, 1, 1).labels_tar.labels == static_cast<int>(kHat)).any();
    if (!face_has_hat) CHECK_THROWS_AS(swap(b, rq), RangeError);
}

TEST_CASE("swap: head preset mask strictly contains the face preset mask") {
    SwapRequest rq = toy_request(2, 3, 7);
    BinaryMask face = category_mask(rq.labels_tar, face_preset_categories());
    BinaryMask head = category_mask(rq.labels_tar, head_preset_categories());
    CHECK(((head.m - face.m) >= 0.0).all());
    CHECK(head.area() > face.area());
}

TEST_CASE("swap_batch: empty request list produces an empty manifest") {
    ModelBundle b = random_bundle();
    auto out = (fs::temp_directory_path() / "fswap_batch_empty").string();
    fs::remove_all(out);
    BatchResult r = swap_batch(b, {}, {}, out);
    CHECK(r.rows.empty());
    CHECK(fs::exists(r.manifest_path));
    CHECK(read_text_file(r.manifest_path).empty());
    fs::remove_all(out);
}

TEST_CASE("swap_batch: outputs, manifest rows, determinism, and per-item failure isolation") {
    ModelBundle b = random_bundle();
    std::vector<SwapRequest> reqs;
    for (int i = 0; i < 6; ++i) reqs.push_back(toy_request(i % 4, (i + 1) % 4, 1000 + i, 4));
    reqs[3].n_steps = 0;  // this one must fail without stopping the run

    auto out1 = (fs::temp_directory_path() / "fswap_batch1").string();
    auto out2 = (fs::temp_directory_path() / "fswap_batch2").string();
    fs::remove_all(out1);
    fs::remove_all(out2);
    BatchResult r1 = swap_batch(b, reqs, {}, out1);
    BatchResult r2 = swap_batch(b, reqs, {}, out2);

    CHECK(r1.rows.size() == 6);
    int ok = 0, failed = 0;
    for (std::size_t i = 0; i < r1.rows.size(); ++i) {
        if (r1.rows[i].status == "ok") {
            ++ok;
            CHECK(fs::exists(out1 + "/" + r1.rows[i].output));
        } else {
            ++failed;
            CHECK(r1.rows[i].output.empty());
        }
    }
    CHECK(ok == 5);
    CHECK(failed == 1);
    CHECK(r1.rows[3].status.find("n_steps") != std::string::npos);

    // rerun with the same seeds: identical manifest and image digests
    CHECK(read_text_file(r1.manifest_path) == read_text_file(r2.manifest_path));
    for (std::size_t i = 0; i < r1.rows.size(); ++i)
        if (r1.rows[i].status == "ok")
            CHECK(file_digest(out1 + "/" + r1.rows[i].output) == file_digest(out2 + "/" + r2.rows[i].output));

    fs::remove_all(out1);
    fs::remove_all(out2);
}

TEST_CASE("swap_batch: concurrent workers match the serial result") {
    ModelBundle b = random_bundle();
    std::vector<SwapRequest> reqs;
    for (int i = 0; i < 4; ++i) reqs.push_back(toy_request(i % 4, (i + 1) % 4, 50 + i, 3));
    auto out1 = (fs::temp_directory_path() / "fswap_batch_serial").string();
    auto out2 = (fs::temp_directory_path() / "fswap_batch_par").string();
    fs::remove_all(out1);
    fs::remove_all(out2);
    BatchResult serial = swap_batch(b, reqs, {}, out1, 1);
    BatchResult par = swap_batch(b, reqs, {}, out2, 3);
    for (std::size_t i = 0; i < reqs.size(); ++i)
        CHECK(file_digest(out1 + "/" + serial.rows[i].output) == file_digest(out2 + "/" + par.rows[i].output));
    fs::remove_all(out1);
    fs::remove_all(out2);
}

TEST_CASE("bundle save/load: swap reproduces bitwise through a checkpoint") {
    ModelBundle b = random_bundle();
    SwapRequest rq = toy_request(1, 2, 5, 4);
    Tensor direct = swap(b, rq);

    auto path = (fs::temp_directory_path() / "fswap_bundle.ckpt").string();
    save_bundle(b, path, 0, nullptr, "final");
    ModelBundle loaded = load_bundle(path);
    Tensor via_ckpt = swap(loaded, rq);
    CHECK(direct.digest() == via_ckpt.digest());
    fs::remove(path);
}

TEST_CASE("load_bundle: missing checkpoint raises an IoError naming the path") {
    try {
        load_bundle("/nonexistent/path/model.ckpt");
        FAIL("expected IoError");
    } catch (const IoError& e) {
        CHECK(std::string(e.what()).find("/nonexistent/path/model.ckpt") != std::string::npos);
    }
}
