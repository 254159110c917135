#include "fswap/config.hpp"

#include <charconv>
#include <cstdio>
#include <sstream>

#include "fswap/image_io.hpp"

namespace fswap {

std::string format_double(double v) {
    char buf[64];
    for (int prec = 1; prec <= 17; ++prec) {
        std::snprintf(buf, sizeof(buf), "%.*g", prec, v);
        if (std::strtod(buf, nullptr) == v) return buf;
    }
    return buf;
}

const std::vector<KeyValueConfig::Entry>& KeyValueConfig::schema() {
    static const std::vector<Entry> entries = {
        {"epochs", "2", "training epochs over the train split"},
        {"learning_rate", "1e-05", "AdamW learning rate"},
        {"weight_decay", "0.0001", "AdamW decoupled weight decay"},
        {"n_ddim_steps", "4", "N, trainable DDIM steps in the enhancement pipeline"},
        {"timesteps", "1000", "T, forward diffusion timesteps"},
        {"beta_start", "0.0001", "linear beta schedule start"},
        {"beta_end", "0.02", "linear beta schedule end"},
        {"w_clip", "1", "condition fusion weight for the semantic term"},
        {"w_id", "10", "condition fusion weight for the identity term"},
        {"w_lm", "0.05", "condition fusion weight for the landmark term"},
        {"w_id_loss", "0.3", "total-loss weight of the identity loss"},
        {"w_ps_loss", "0.1", "total-loss weight of the perceptual loss"},
        {"mixing", "both", "pipeline mixing policy: both | alternate"},
        {"seed", "0", "run seed; all randomness derives from it"},
        {"grad_clip", "1", "global gradient-norm clip"},
        {"image_size", "32", "square image resolution"},
        {"codec", "identity", "latent codec: identity | conv"},
        {"model_channels", "16", "denoiser base channel width"},
        {"cond_dim", "768", "D, fused condition dimension"},
        {"clip_dim", "512", "semantic embedding width before projection"},
        {"id_dim", "32", "identity embedding width"},
        {"attn_dim", "32", "cross-attention inner width"},
        {"enhancement_warmup_steps", "0", "steps before the enhancement losses switch on"},
        {"checkpoint_every", "0", "periodic checkpoint interval in steps (0: final only)"},
        {"sem_pretrain_steps", "300", "semantic encoder pretraining steps"},
        {"id_pretrain_steps", "300", "identity encoder pretraining steps"},
        {"codec_pretrain_steps", "2200", "conv codec pretraining steps"},
        {"pretrain_lr", "0.002", "learning rate for encoder/codec pretraining"},
        {"shuffle_lo", "1", "mask shuffling: minimum category count"},
        {"shuffle_hi", "17", "mask shuffling: maximum category count"},
        {"shuffle_pool", "all", "mask shuffling category pool: all | face | head"},
        {"mask_preset", "face", "inference mask preset: face | head | custom=<ids>"},
        {"n_steps", "50", "inference DDIM steps"},
        {"eval_pairs", "64", "benchmark swap pairs"},
        {"workers", "1", "parallel workers for batch swapping"},
        {"data_root", "", "dataset directory (FSWAP_DATA_ROOT supplies the default)"},
        {"out_dir", "", "run output directory"},
    };
    return entries;
}

KeyValueConfig KeyValueConfig::defaults() {
    KeyValueConfig kv;
    for (const auto& e : schema()) kv.values_.emplace_back(e.key, e.default_value);
    return kv;
}

void KeyValueConfig::set(const std::string& key, const std::string& value) {
    for (auto& [k, v] : values_) {
        if (k == key) {
            v = value;
            return;
        }
    }
    throw SchemaError("config: unknown key '" + key + "'");
}

const std::string& KeyValueConfig::get(const std::string& key) const {
    for (const auto& [k, v] : values_)
        if (k == key) return v;
    throw SchemaError("config: unknown key '" + key + "'");
}

int KeyValueConfig::get_int(const std::string& key) const {
    const std::string& s = get(key);
    try {
        std::size_t pos = 0;
        int v = std::stoi(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw SchemaError("config: key '" + key + "' is not an integer: '" + s + "'");
    }
}

double KeyValueConfig::get_double(const std::string& key) const {
    const std::string& s = get(key);
    try {
        std::size_t pos = 0;
        double v = std::stod(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw SchemaError("config: key '" + key + "' is not a number: '" + s + "'");
    }
}

std::uint64_t KeyValueConfig::get_u64(const std::string& key) const {
    const std::string& s = get(key);
    try {
        std::size_t pos = 0;
        std::uint64_t v = std::stoull(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw SchemaError("config: key '" + key + "' is not an unsigned integer: '" + s + "'");
    }
}

std::string KeyValueConfig::echo() const {
    std::string out;
    for (const auto& [k, v] : values_) out += k + " = " + v + "\n";
    return out;
}

namespace {

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

}  // namespace

KeyValueConfig KeyValueConfig::parse(const std::string& text) {
    KeyValueConfig kv = defaults();
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        auto eq = t.find('=');
        if (eq == std::string::npos)
            throw SchemaError("config: line " + std::to_string(lineno) + " is not 'key = value': " + t);
        kv.set(trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
    }
    return kv;
}

KeyValueConfig KeyValueConfig::from_file(const std::string& path) { return parse(read_text_file(path)); }

TrainConfig train_config_from(const KeyValueConfig& kv) {
    TrainConfig c;
    c.epochs = kv.get_int("epochs");
    c.learning_rate = kv.get_double("learning_rate");
    c.weight_decay = kv.get_double("weight_decay");
    c.n_ddim_steps = kv.get_int("n_ddim_steps");
    c.timesteps = kv.get_int("timesteps");
    c.beta_start = kv.get_double("beta_start");
    c.beta_end = kv.get_double("beta_end");
    c.fusion.w_clip = kv.get_double("w_clip");
    c.fusion.w_id = kv.get_double("w_id");
    c.fusion.w_lm = kv.get_double("w_lm");
    c.loss_weights.w_id = kv.get_double("w_id_loss");
    c.loss_weights.w_ps = kv.get_double("w_ps_loss");
    const std::string& mix = kv.get("mixing");
    if (mix == "both")
        c.mixing = MixPolicy::both;
    else if (mix == "alternate")
        c.mixing = MixPolicy::alternate;
    else
        throw SchemaError("config: mixing must be both|alternate, got '" + mix + "'");
    c.seed = kv.get_u64("seed");
    c.grad_clip = kv.get_double("grad_clip");
    c.image_size = kv.get_int("image_size");
    c.codec = kv.get("codec");
    c.model_channels = kv.get_int("model_channels");
    c.cond_dim = kv.get_int("cond_dim");
    c.clip_dim = kv.get_int("clip_dim");
    c.id_dim = kv.get_int("id_dim");
    c.attn_dim = kv.get_int("attn_dim");
    c.enhancement_warmup_steps = kv.get_int("enhancement_warmup_steps");
    c.checkpoint_every = kv.get_int("checkpoint_every");
    c.sem_pretrain_steps = kv.get_int("sem_pretrain_steps");
    c.id_pretrain_steps = kv.get_int("id_pretrain_steps");
    c.codec_pretrain_steps = kv.get_int("codec_pretrain_steps");
    c.pretrain_lr = kv.get_double("pretrain_lr");
    c.shuffle_lo = kv.get_int("shuffle_lo");
    c.shuffle_hi = kv.get_int("shuffle_hi");
    c.shuffle_pool = kv.get("shuffle_pool");
    c.validate();
    return c;
}

KeyValueConfig config_from_train(const TrainConfig& c) {
    KeyValueConfig kv = KeyValueConfig::defaults();
    kv.set("epochs", std::to_string(c.epochs));
    kv.set("learning_rate", format_double(c.learning_rate));
    kv.set("weight_decay", format_double(c.weight_decay));
    kv.set("n_ddim_steps", std::to_string(c.n_ddim_steps));
    kv.set("timesteps", std::to_string(c.timesteps));
    kv.set("beta_start", format_double(c.beta_start));
    kv.set("beta_end", format_double(c.beta_end));
    kv.set("w_clip", format_double(c.fusion.w_clip));
    kv.set("w_id", format_double(c.fusion.w_id));
    kv.set("w_lm", format_double(c.fusion.w_lm));
    kv.set("w_id_loss", format_double(c.loss_weights.w_id));
    kv.set("w_ps_loss", format_double(c.loss_weights.w_ps));
    kv.set("mixing", c.mixing == MixPolicy::both ? "both" : "alternate");
    kv.set("seed", std::to_string(c.seed));
    kv.set("grad_clip", format_double(c.grad_clip));
    kv.set("image_size", std::to_string(c.image_size));
    kv.set("codec", c.codec);
    kv.set("model_channels", std::to_string(c.model_channels));
    kv.set("cond_dim", std::to_string(c.cond_dim));
    kv.set("clip_dim", std::to_string(c.clip_dim));
    kv.set("id_dim", std::to_string(c.id_dim));
    kv.set("attn_dim", std::to_string(c.attn_dim));
    kv.set("enhancement_warmup_steps", std::to_string(c.enhancement_warmup_steps));
    kv.set("checkpoint_every", std::to_string(c.checkpoint_every));
    kv.set("sem_pretrain_steps", std::to_string(c.sem_pretrain_steps));
    kv.set("id_pretrain_steps", std::to_string(c.id_pretrain_steps));
    kv.set("codec_pretrain_steps", std::to_string(c.codec_pretrain_steps));
    kv.set("pretrain_lr", format_double(c.pretrain_lr));
    kv.set("shuffle_lo", std::to_string(c.shuffle_lo));
    kv.set("shuffle_hi", std::to_string(c.shuffle_hi));
    kv.set("shuffle_pool", c.shuffle_pool);
    return kv;
}

}  // namespace fswap
