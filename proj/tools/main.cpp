#include <CLI11.hpp>
#include <json.hpp>
#include <cstdlib>
#include <filesystem>
#include <iostream>

#include "fswap/config.hpp"
#include "fswap/evaluation.hpp"
#include "fswap/image_io.hpp"

namespace fs = std::filesystem;
using namespace fswap;

namespace {

std::string default_data_root() {
    const char* env = std::getenv("FSWAP_DATA_ROOT");
    return env ? env : "";
}

KeyValueConfig load_config(const std::string& config_path) {
    return config_path.empty() ? KeyValueConfig::defaults() : KeyValueConfig::from_file(config_path);
}

void echo_config(const KeyValueConfig& kv, const std::string& out_dir) {
    fs::create_directories(out_dir);
    write_text_file(out_dir + "/config_echo.cfg", kv.echo());
}

struct CommonArgs {
    std::string config_path;
    std::string data_root = default_data_root();
    std::string out_dir;
    std::int64_t seed = -1;   // <0: take from config
    int steps = -1;           // <0: take from config
    std::string preset;       // empty: take from config
};

void add_common(CLI::App* cmd, CommonArgs& a, bool needs_data) {
    cmd->add_option("--config", a.config_path, "key = value config file (defaults apply to unset keys)");
    cmd->add_option("--seed", a.seed, "run seed (overrides the config)");
    cmd->add_option("--out", a.out_dir, "output directory")->required();
    if (needs_data)
        cmd->add_option("--data", a.data_root, "dataset directory (default: FSWAP_DATA_ROOT)")
            ->required(default_data_root().empty());
}

KeyValueConfig merge_flags(const CommonArgs& a) {
    KeyValueConfig kv = load_config(a.config_path);
    if (a.seed >= 0) kv.set("seed", std::to_string(a.seed));
    if (a.steps > 0) kv.set("n_steps", std::to_string(a.steps));
    if (!a.preset.empty()) kv.set("mask_preset", a.preset);
    if (!a.data_root.empty()) kv.set("data_root", a.data_root);
    kv.set("out_dir", a.out_dir);
    return kv;
}

SwapRequest request_from_dataset(const Dataset& ds, int src, int tar, const KeyValueConfig& kv) {
    if (src < 0 || src >= ds.size() || tar < 0 || tar >= ds.size())
        throw RangeError("item index out of range (dataset has " + std::to_string(ds.size()) + " items)");
    SwapRequest rq;
    rq.x_src = ds.image(src);
    rq.x_tar = ds.image(tar);
    rq.labels_src = ds.labels(src);
    rq.labels_tar = ds.labels(tar);
    rq.lm_tar = ds.landmarks(tar);
    rq.preset = parse_mask_preset(kv.get("mask_preset"), &rq.custom_categories);
    rq.n_steps = kv.get_int("n_steps");
    rq.seed = kv.get_u64("seed");
    return rq;
}

int cmd_gen_data(const CommonArgs& a, int identities, int per_identity, int size) {
    KeyValueConfig kv = merge_flags(a);
    echo_config(kv, a.out_dir);
    Dataset ds = generate_toy_dataset(identities, per_identity, size, kv.get_u64("seed"), a.out_dir);
    std::cout << "generated " << ds.size() << " items under " << a.out_dir << "\n";
    return 0;
}

int cmd_train(const CommonArgs& a, const std::string& resume) {
    KeyValueConfig kv = merge_flags(a);
    echo_config(kv, a.out_dir);
    Dataset ds = load_dataset(kv.get("data_root"));
    TrainConfig cfg = train_config_from(kv);
    TrainReport rep = train(cfg, ds, a.out_dir, resume);
    std::cout << "trained " << rep.records.size() << " steps; checkpoint at " << rep.checkpoint_path << "\n";
    return 0;
}

int cmd_swap(const CommonArgs& a, const std::string& checkpoint, int src, int tar, bool force_head) {
    KeyValueConfig kv = merge_flags(a);
    if (force_head) kv.set("mask_preset", "head");
    echo_config(kv, a.out_dir);
    Dataset ds = load_dataset(kv.get("data_root"));
    ModelBundle bundle = load_bundle(checkpoint);
    SwapRequest rq = request_from_dataset(ds, src, tar, kv);
    Tensor out = swap(bundle, rq);
    std::string out_path = a.out_dir + "/swap.ppm";
    write_ppm(out_path, out);
    write_text_file(a.out_dir + "/swap_manifest.jsonl",
                    std::string("{\"source\":\"") + ds.items[src].image_path + "\",\"target\":\"" +
                        ds.items[tar].image_path + "\",\"output\":\"swap.ppm\",\"seed\":" +
                        std::to_string(rq.seed) + ",\"n_steps\":" + std::to_string(rq.n_steps) +
                        ",\"status\":\"ok\"}\n");
    std::cout << "wrote " << out_path << "\n";
    return 0;
}

int cmd_eval(const CommonArgs& a, const std::string& checkpoint, int pairs) {
    KeyValueConfig kv = merge_flags(a);
    if (pairs > 0) kv.set("eval_pairs", std::to_string(pairs));
    echo_config(kv, a.out_dir);
    Dataset ds = load_dataset(kv.get("data_root"));
    ModelBundle bundle = load_bundle(checkpoint);
    EvalConfig ec;
    ec.n_pairs = kv.get_int("eval_pairs");
    ec.n_steps = kv.get_int("n_steps");
    ec.preset = parse_mask_preset(kv.get("mask_preset"), &ec.custom_categories);
    ec.seed = kv.get_u64("seed");
    ec.workers = kv.get_int("workers");
    EvalReport rep = run_benchmark(bundle, ds, ec, a.out_dir);
    std::cout << rep.to_text();
    return 0;
}

int cmd_grid(const CommonArgs& a, const std::string& swaps_dir) {
    KeyValueConfig kv = merge_flags(a);
    echo_config(kv, a.out_dir);
    Dataset ds = load_dataset(kv.get("data_root"));

    std::string manifest = read_text_file(swaps_dir + "/manifest.jsonl");
    std::istringstream in(manifest);
    std::string line;
    std::vector<std::vector<Tensor>> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto j = nlohmann::json::parse(line);
        if (j.value("status", "") != "ok") continue;
        auto find_item = [&](const std::string& rel) -> const Tensor& {
            for (int i = 0; i < ds.size(); ++i)
                if (ds.items[i].image_path == rel) return ds.image(i);
            throw IoError("grid: manifest references unknown dataset item " + rel);
        };
        Tensor swap_img = read_ppm(swaps_dir + "/" + j["output"].get<std::string>());
        rows.push_back({find_item(j["source"].get<std::string>()), find_item(j["target"].get<std::string>()),
                        swap_img});
    }
    if (rows.empty()) throw RangeError("grid: no successful rows in " + swaps_dir + "/manifest.jsonl");
    Tensor canvas = compose_grid(rows, 1);
    std::string out_path = a.out_dir + "/grid.ppm";
    write_ppm(out_path, canvas);
    std::cout << "wrote " << out_path << " (" << rows.size() << " triptych rows)\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"toy-scale diffusion face swapping"};
    app.require_subcommand(1);

    CommonArgs gen_args, train_args, swap_args, head_args, eval_args, grid_args;
    int identities = 8, per_identity = 32, size = 32;
    std::string resume, ckpt_train, ckpt_swap, ckpt_head, ckpt_eval, swaps_dir;
    int src = 0, tar = 1, head_src = 0, head_tar = 1, pairs = -1;

    auto* gen = app.add_subcommand("gen-data", "generate the procedural toy dataset");
    add_common(gen, gen_args, false);
    gen->add_option("--identities", identities, "number of identities");
    gen->add_option("--per-identity", per_identity, "images per identity");
    gen->add_option("--size", size, "square image size");

    auto* tr = app.add_subcommand("train", "train the conditional-inpainting diffusion model");
    add_common(tr, train_args, true);
    tr->add_option("--resume", resume, "resume from a training-state checkpoint");

    auto* sw = app.add_subcommand("swap", "swap one source face onto one target");
    add_common(sw, swap_args, true);
    sw->add_option("--checkpoint", ckpt_swap, "trained checkpoint")->required();
    sw->add_option("--src", src, "source item index")->required();
    sw->add_option("--tar", tar, "target item index")->required();
    sw->add_option("--steps", swap_args.steps, "DDIM steps");
    sw->add_option("--preset", swap_args.preset, "mask preset: face|head|custom=<ids>");

    auto* hs = app.add_subcommand("headswap", "swap with the head preset (face + hair)");
    add_common(hs, head_args, true);
    hs->add_option("--checkpoint", ckpt_head, "trained checkpoint")->required();
    hs->add_option("--src", head_src, "source item index")->required();
    hs->add_option("--tar", head_tar, "target item index")->required();
    hs->add_option("--steps", head_args.steps, "DDIM steps");

    auto* ev = app.add_subcommand("eval", "run the benchmark protocol on a checkpoint");
    add_common(ev, eval_args, true);
    ev->add_option("--checkpoint", ckpt_eval, "trained checkpoint")->required();
    ev->add_option("--pairs", pairs, "number of swap pairs");
    ev->add_option("--steps", eval_args.steps, "DDIM steps");
    ev->add_option("--preset", eval_args.preset, "mask preset");

    auto* gr = app.add_subcommand("grid", "compose source|target|swap triptychs from a batch output");
    add_common(gr, grid_args, true);
    gr->add_option("--swaps", swaps_dir, "swap_batch output directory (with manifest.jsonl)")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 1;  // usage errors exit 1, help exits 0
    }

    try {
        if (gen->parsed()) return cmd_gen_data(gen_args, identities, per_identity, size);
        if (tr->parsed()) return cmd_train(train_args, resume);
        if (sw->parsed()) return cmd_swap(swap_args, ckpt_swap, src, tar, false);
        if (hs->parsed()) return cmd_swap(head_args, ckpt_head, head_src, head_tar, true);
        if (ev->parsed()) return cmd_eval(eval_args, ckpt_eval, pairs);
        if (gr->parsed()) return cmd_grid(grid_args, swaps_dir);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 1;
}
