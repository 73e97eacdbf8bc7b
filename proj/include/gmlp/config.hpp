#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace gmlp {

enum class Protocol { VisionPatch, MlmToken };
enum class SguVariant { Linear, Additive, Multiplicative, MultiplicativeSplit };
enum class SpatialMode { Dense, Toeplitz };

std::string to_string(Protocol p);
std::string to_string(SguVariant v);
std::string to_string(SpatialMode m);
SguVariant sgu_variant_from_string(const std::string& s);
SpatialMode spatial_mode_from_string(const std::string& s);

// Full architectural description of one model. `n` is the fixed sequence
// length (patch count for vision, max token length for MLM).
struct ModelConfig {
    Protocol protocol = Protocol::MlmToken;
    int L = 1;
    int d_model = 0;
    int d_ffn = 0;
    int n = 0;
    SguVariant sgu_variant = SguVariant::MultiplicativeSplit;
    SpatialMode spatial_mode = SpatialMode::Dense;
    std::optional<int> tiny_attn;  // single-head attention size when present
    double survival_prob = 1.0;

    // MLM protocol
    int vocab_size = 0;

    // Vision protocol
    int num_classes = 0;
    int image_size = 224;
    int patch_size = 16;
    int image_channels = 3;

    int sgu_input_channels() const { return d_ffn; }
    int sgu_output_channels() const {
        return sgu_variant == SguVariant::MultiplicativeSplit ? d_ffn / 2 : d_ffn;
    }
    int gate_channels() const {  // channel count seen by the spatial projection
        return sgu_variant == SguVariant::MultiplicativeSplit ? d_ffn / 2 : d_ffn;
    }
    int patch_dim() const { return patch_size * patch_size * image_channels; }

    // Throws std::invalid_argument describing the first violated constraint.
    void validate() const;
};

// Named presets reproducing the published model specification tables.
std::vector<std::string> preset_names();
bool is_preset(const std::string& name);
ModelConfig preset(const std::string& name);

// Strict JSON schema: exactly the ModelConfig field names, unknown fields
// rejected. `tiny_attn` may be null or absent.
ModelConfig config_from_json(const std::string& json_text);
std::string config_to_json(const ModelConfig& cfg);

// Resolves "--config" CLI values: a preset name or a path to a JSON file.
ModelConfig resolve_config(const std::string& preset_or_path);

}  // namespace gmlp
