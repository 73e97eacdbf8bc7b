#include "gmlp/config.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "gmlp/tensor.hpp"

namespace gmlp {

std::string to_string(Protocol p) {
    return p == Protocol::VisionPatch ? "vision_patch" : "mlm_token";
}

std::string to_string(SguVariant v) {
    switch (v) {
        case SguVariant::Linear: return "linear";
        case SguVariant::Additive: return "additive";
        case SguVariant::Multiplicative: return "multiplicative";
        case SguVariant::MultiplicativeSplit: return "multiplicative_split";
    }
    return "?";
}

std::string to_string(SpatialMode m) { return m == SpatialMode::Dense ? "dense" : "toeplitz"; }

SguVariant sgu_variant_from_string(const std::string& s) {
    if (s == "linear") return SguVariant::Linear;
    if (s == "additive") return SguVariant::Additive;
    if (s == "multiplicative") return SguVariant::Multiplicative;
    if (s == "multiplicative_split") return SguVariant::MultiplicativeSplit;
    fail("unknown sgu_variant: " + s);
}

SpatialMode spatial_mode_from_string(const std::string& s) {
    if (s == "dense") return SpatialMode::Dense;
    if (s == "toeplitz") return SpatialMode::Toeplitz;
    fail("unknown spatial_mode: " + s);
}

void ModelConfig::validate() const {
    require(L >= 1, "config: L must be >= 1");
    require(d_model >= 1, "config: d_model must be >= 1");
    require(d_ffn >= 1, "config: d_ffn must be >= 1");
    require(n >= 1, "config: n must be >= 1");
    if (sgu_variant == SguVariant::MultiplicativeSplit)
        require(d_ffn % 2 == 0, "config: d_ffn must be even for the split SGU variant");
    require(survival_prob > 0.0 && survival_prob <= 1.0,
            "config: survival_prob must be in (0, 1]");
    if (tiny_attn) require(*tiny_attn >= 1, "config: tiny_attn must be >= 1 when present");
    if (protocol == Protocol::MlmToken) {
        require(vocab_size >= 2, "config: vocab_size must be >= 2 for mlm_token");
    } else {
        require(num_classes >= 1, "config: num_classes must be >= 1 for vision_patch");
        require(patch_size >= 1 && image_size >= patch_size && image_channels >= 1,
                "config: bad patch geometry");
        require(image_size % patch_size == 0, "config: image_size must be divisible by patch_size");
        const int g = image_size / patch_size;
        require(n == g * g, "config: n must equal the patch count (image_size/patch_size)^2");
    }
}

namespace {

ModelConfig vision_preset(int L, int d_model, int d_ffn, double survival) {
    ModelConfig c;
    c.protocol = Protocol::VisionPatch;
    c.L = L;
    c.d_model = d_model;
    c.d_ffn = d_ffn;
    c.n = 196;  // 224x224 input, 16x16 patches
    c.sgu_variant = SguVariant::MultiplicativeSplit;
    c.spatial_mode = SpatialMode::Dense;
    c.survival_prob = survival;
    c.num_classes = 1000;
    return c;
}

ModelConfig mlm_preset(int L, int d_model, int d_ffn, std::optional<int> attn) {
    ModelConfig c;
    c.protocol = Protocol::MlmToken;
    c.L = L;
    c.d_model = d_model;
    c.d_ffn = d_ffn;
    c.n = 512;
    c.sgu_variant = SguVariant::MultiplicativeSplit;
    c.spatial_mode = SpatialMode::Toeplitz;
    c.tiny_attn = attn;
    c.survival_prob = 1.0;
    c.vocab_size = 32000;
    return c;
}

}  // namespace

std::vector<std::string> preset_names() {
    return {"gmlp-ti",   "gmlp-s",     "gmlp-b",     "gmlp-base", "amlp-base",
            "gmlp-large", "amlp-large", "gmlp-xlarge", "micro"};
}

bool is_preset(const std::string& name) {
    for (const auto& p : preset_names())
        if (p == name) return true;
    return false;
}

ModelConfig preset(const std::string& name) {
    if (name == "gmlp-ti") return vision_preset(30, 128, 768, 1.00);
    if (name == "gmlp-s") return vision_preset(30, 256, 1536, 0.95);
    if (name == "gmlp-b") return vision_preset(30, 512, 3072, 0.80);
    if (name == "gmlp-base") return mlm_preset(48, 512, 3072, std::nullopt);
    if (name == "amlp-base") return mlm_preset(36, 512, 3072, 64);
    if (name == "gmlp-large") return mlm_preset(96, 768, 3072, std::nullopt);
    if (name == "amlp-large") return mlm_preset(72, 768, 3072, 128);
    if (name == "gmlp-xlarge") return mlm_preset(144, 1024, 4096, std::nullopt);
    if (name == "micro") {
        ModelConfig c = mlm_preset(2, 32, 64, std::nullopt);
        c.n = 16;
        c.vocab_size = 16;
        c.spatial_mode = SpatialMode::Dense;
        return c;
    }
    std::string msg = "unknown preset '" + name + "'; available:";
    for (const auto& p : preset_names()) msg += " " + p;
    fail(msg);
}

ModelConfig config_from_json(const std::string& json_text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(json_text);
    } catch (const nlohmann::json::parse_error& e) {
        fail(std::string("config JSON parse error: ") + e.what());
    }
    require(j.is_object(), "config JSON must be an object");

    static const std::vector<std::string> known = {
        "protocol",      "L",          "d_model",     "d_ffn",      "n",
        "sgu_variant",   "spatial_mode", "tiny_attn", "survival_prob", "vocab_size",
        "num_classes",   "image_size", "patch_size",  "image_channels"};
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (const auto& k : known) ok = ok || k == it.key();
        require(ok, "config JSON: unknown field '" + it.key() + "'");
    }

    ModelConfig c;
    const std::string protocol = j.at("protocol").get<std::string>();
    if (protocol == "vision_patch") c.protocol = Protocol::VisionPatch;
    else if (protocol == "mlm_token") c.protocol = Protocol::MlmToken;
    else fail("config JSON: protocol must be vision_patch or mlm_token");

    c.L = j.at("L").get<int>();
    c.d_model = j.at("d_model").get<int>();
    c.d_ffn = j.at("d_ffn").get<int>();
    c.n = j.at("n").get<int>();
    if (j.contains("sgu_variant")) c.sgu_variant = sgu_variant_from_string(j["sgu_variant"]);
    if (j.contains("spatial_mode")) c.spatial_mode = spatial_mode_from_string(j["spatial_mode"]);
    if (j.contains("tiny_attn") && !j["tiny_attn"].is_null()) c.tiny_attn = j["tiny_attn"].get<int>();
    if (j.contains("survival_prob")) c.survival_prob = j["survival_prob"].get<double>();
    if (j.contains("vocab_size")) c.vocab_size = j["vocab_size"].get<int>();
    if (j.contains("num_classes")) c.num_classes = j["num_classes"].get<int>();
    if (j.contains("image_size")) c.image_size = j["image_size"].get<int>();
    if (j.contains("patch_size")) c.patch_size = j["patch_size"].get<int>();
    if (j.contains("image_channels")) c.image_channels = j["image_channels"].get<int>();
    c.validate();
    return c;
}

std::string config_to_json(const ModelConfig& cfg) {
    nlohmann::json j;
    j["protocol"] = to_string(cfg.protocol);
    j["L"] = cfg.L;
    j["d_model"] = cfg.d_model;
    j["d_ffn"] = cfg.d_ffn;
    j["n"] = cfg.n;
    j["sgu_variant"] = to_string(cfg.sgu_variant);
    j["spatial_mode"] = to_string(cfg.spatial_mode);
    if (cfg.tiny_attn) j["tiny_attn"] = *cfg.tiny_attn;
    j["survival_prob"] = cfg.survival_prob;
    if (cfg.protocol == Protocol::MlmToken) {
        j["vocab_size"] = cfg.vocab_size;
    } else {
        j["num_classes"] = cfg.num_classes;
        j["image_size"] = cfg.image_size;
        j["patch_size"] = cfg.patch_size;
        j["image_channels"] = cfg.image_channels;
    }
    return j.dump(2);
}

ModelConfig resolve_config(const std::string& preset_or_path) {
    if (is_preset(preset_or_path)) return preset(preset_or_path);
    std::ifstream in(preset_or_path);
    if (!in) {
        std::string msg = "unknown preset '" + preset_or_path + "' (and no such file); available:";
        for (const auto& p : preset_names()) msg += " " + p;
        fail(msg);
    }
    std::stringstream ss;
    ss << in.rdbuf();
    return config_from_json(ss.str());
}

}  // namespace gmlp
