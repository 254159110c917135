#include "fswap/inference.hpp"

#include <filesystem>
#include <thread>

#include <json.hpp>

#include "fswap/image_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace fswap {

MaskPreset parse_mask_preset(const std::string& s, std::vector<int>* custom_out) {
    if (s == "face") return MaskPreset::face;
    if (s == "head") return MaskPreset::head;
    if (s.rfind("custom=", 0) == 0) {
        if (!custom_out) throw SchemaError("parse_mask_preset: custom preset needs a category list sink");
        custom_out->clear();
        std::string body = s.substr(7);
        std::size_t pos = 0;
        while (pos < body.size()) {
            std::size_t comma = body.find(',', pos);
            std::string tok = body.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
            try {
                custom_out->push_back(std::stoi(tok));
            } catch (const std::exception&) {
                throw SchemaError("parse_mask_preset: bad category id '" + tok + "'");
            }
            if (comma == std::string::npos) break;
            pos = comma + 1;
        }
        if (custom_out->empty()) throw SchemaError("parse_mask_preset: empty custom category set");
        return MaskPreset::custom;
    }
    throw SchemaError("parse_mask_preset: unknown preset '" + s + "' (face|head|custom=<ids>)");
}

const std::vector<int>& preset_categories(MaskPreset preset, const std::vector<int>& custom) {
    switch (preset) {
        case MaskPreset::face:
            return face_preset_categories();
        case MaskPreset::head:
            return head_preset_categories();
        case MaskPreset::custom:
            if (custom.empty()) throw RangeError("preset_categories: empty custom category set");
            return custom;
    }
    throw RangeError("preset_categories: bad preset");
}

Tensor swap(const Denoiser& model, const Codec& codec, const EncoderSuite& suite, const NoiseSchedule& sched,
            const SwapRequest& request) {
    if (request.n_steps < 1 || request.n_steps > sched.T)
        throw RangeError("swap: n_steps must be in [1, T], got " + std::to_string(request.n_steps));
    const auto& cats = preset_categories(request.preset, request.custom_categories);
    BinaryMask m_tar = category_mask(request.labels_tar, cats);
    m_tar.role = MaskRole::target;
    BinaryMask m_src = category_mask(request.labels_src, cats);
    m_src.role = MaskRole::source;
    if (m_tar.area() == 0.0) throw RangeError("swap: empty target mask for the requested preset");
    if (m_src.area() == 0.0) throw RangeError("swap: empty source mask for the requested preset");

    // condition: source face crop as reference, unaugmented
    Tensor ref = apply_mask(request.x_src, m_src);
    Tensor f =
        build_condition(suite, ag::constant(ref), ag::constant(request.x_tar), request.lm_tar).value();

    Tensor z_inp = codec.encode(apply_mask(request.x_tar, m_tar.complement())).data;

    Rng rng(request.seed);
    Tensor z_T = Tensor::randn(z_inp.shape(), rng);
    auto denoise = [&](const Tensor& z, int t) {
        return predict_noise(model, assemble_input(z, z_inp, m_tar, t, f));
    };
    auto trace = ddim_sample(denoise, z_T, make_step_schedule(sched.T, request.n_steps), sched);
    Tensor out = codec.decode(trace.z0);
    if (!out.all_finite()) throw NumericError("swap: non-finite output image");
    for (auto& v : out) v = std::clamp(v, 0.0, 1.0);
    return out;
}

double background_mae(const Tensor& swapped, const Tensor& target, const BinaryMask& m_tar) {
    require_same_shape(swapped, target, "background_mae");
    double acc = 0.0;
    long n = 0;
    for (int c = 0; c < swapped.c(); ++c)
        for (int y = 0; y < swapped.h(); ++y)
            for (int x = 0; x < swapped.w(); ++x)
                if (m_tar.m(y, x) == 0.0) {
                    acc += std::abs(swapped.at(c, y, x) - target.at(c, y, x));
                    ++n;
                }
    return n ? acc / n : 0.0;
}

BatchResult swap_batch(const ModelBundle& bundle, const std::vector<SwapRequest>& requests,
                       const std::vector<std::pair<std::string, std::string>>& names, const std::string& out_dir,
                       int workers) {
    if (!names.empty() && names.size() != requests.size())
        throw ShapeError("swap_batch: names/requests size mismatch");
    fs::create_directories(out_dir);
    BatchResult result;
    result.rows.resize(requests.size());
    result.images.resize(requests.size());

    auto run_item = [&](std::size_t i) {
        SwapManifestRow& row = result.rows[i];
        row.source = names.empty() ? "request_" + std::to_string(i) + ".src" : names[i].first;
        row.target = names.empty() ? "request_" + std::to_string(i) + ".tar" : names[i].second;
        row.seed = requests[i].seed;
        row.n_steps = requests[i].n_steps;
        char buf[32];
        std::snprintf(buf, sizeof(buf), "swap_%05zu.ppm", i);
        row.output = buf;
        try {
            Tensor img = swap(bundle, requests[i]);
            write_ppm(out_dir + "/" + row.output, img);
            result.images[i] = std::move(img);
            row.status = "ok";
        } catch (const std::exception& e) {
            row.status = std::string("error: ") + e.what();
            row.output.clear();
        }
    };

    workers = std::max(1, workers);
    if (workers == 1) {
        for (std::size_t i = 0; i < requests.size(); ++i) run_item(i);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> pool;
        for (int w = 0; w < workers; ++w)
            pool.emplace_back([&] {
                while (true) {
                    std::size_t i = next.fetch_add(1);
                    if (i >= requests.size()) break;
                    run_item(i);
                }
            });
        for (auto& th : pool) th.join();
    }

    std::string manifest;
    for (const auto& row : result.rows) {
        json j = {{"source", row.source}, {"target", row.target},   {"output", row.output},
                  {"seed", row.seed},     {"n_steps", row.n_steps}, {"status", row.status}};
        manifest += j.dump() + "\n";
    }
    result.manifest_path = out_dir + "/manifest.jsonl";
    write_text_file(result.manifest_path, manifest);
    return result;
}

}  // namespace fswap
