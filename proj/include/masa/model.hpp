#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "masa/tape.hpp"

#include <json.hpp>

namespace masa {

enum class FusionMode { attentive, concat, mean };
enum class SpatialOrder { early, late };
enum class HeadKind { regression, classification };

std::string to_string(FusionMode m);
std::string to_string(SpatialOrder s);
std::string to_string(HeadKind h);
FusionMode fusion_from_string(const std::string& s);
SpatialOrder spatial_from_string(const std::string& s);
HeadKind head_from_string(const std::string& s);

// Architecture hyperparameters. Temporal dilation starts at `sat_dilation`
// in the space-aware layer and doubles per residual block.
struct ModelConfig {
    int num_channels = 32;
    int num_bands = 6;
    std::vector<int> anchor_lengths = {3, 5, 15};
    int width = 64;               // kernels per layer (s)
    int num_tcn_blocks = 1;
    int tcn_kernel_len = 3;
    int sat_dilation = 2;
    FusionMode fusion = FusionMode::attentive;
    SpatialOrder spatial = SpatialOrder::early;
    HeadKind head = HeadKind::regression;
    int num_classes = 2;
    bool mean_fusion_head = true;
    double dropout_rate = 0.15;

    void validate() const;
    int feature_dim() const { return num_channels * num_bands; }
    int num_anchors() const { return static_cast<int>(anchor_lengths.size()); }
    int block_dilation(int block) const { return sat_dilation << block; }  // block is 1-based
    // Channel counts along the stack.
    int branch_channels() const;     // per-anchor output entering the fusion
    int fusion_out_channels() const;
    int block_out_channels() const;
    int embedding_channels() const;  // channels of H^m feeding the head
    int head_out_dim() const { return head == HeadKind::regression ? 1 : num_classes; }

    nlohmann::json to_json() const;
    static ModelConfig from_json(const nlohmann::json& j);
};

// Named parameter store. Registry order is the serialization contract; see
// for_each_param for the authoritative enumeration.
struct ModelParams {
    std::vector<std::string> order;
    std::map<std::string, Tensor> tensors;

    Tensor& at(const std::string& name);
    const Tensor& at(const std::string& name) const;
    bool has(const std::string& name) const { return tensors.count(name) != 0; }
    std::int64_t count() const;
};

enum class ParamKind { conv, wn_direction, wn_gain, prelu_alpha, linear_weight, bias };

// Enumerates the parameter registry for a configuration in serialization
// order. Single source of truth for shapes, counts and initialization.
void for_each_param(const ModelConfig& cfg,
                    const std::function<void(const std::string&, const Shape&, ParamKind)>& fn);

ModelParams init_params(const ModelConfig& cfg, std::uint64_t seed);
std::int64_t expected_param_count(const ModelConfig& cfg);

// One forward evaluation context. Parameters are bound onto the tape once
// and may be reused across the samples of a batch; gradients then accumulate
// on the shared leaves.
struct ModelRun {
    Tape& tape;
    const ModelConfig& cfg;
    std::map<std::string, int> leaf;
    bool training = false;
    std::uint64_t dropout_seed = 0;
    int dropout_counter = 0;
};

ModelRun bind_params(Tape& tape, const ModelConfig& cfg, const ModelParams& params);

// H^m embedding of one sample x with shape (1, C*f, t); returns a tape id of
// shape (embedding_channels, 1, t).
int model_embedding(ModelRun& run, int x);
// Regression: one value per sub-segment, shape (t).
int model_regression(ModelRun& run, int x);
// Classification: logits of shape (num_classes), mean-fused over sub-segments
// or taken from the final sub-segment per `mean_fusion_head`.
int model_logits(ModelRun& run, int x);

// Analytic receptive field: 1 + sum over causal temporal layers of
// (k-1)*dilation along the longest path (max anchor in the multi-anchor
// stage, both convolutions of every residual block).
int receptive_field(const ModelConfig& cfg);
// The closed form 1 + (k-1)*(2^(m+2) - 3) with k = max anchor, reported for
// comparison against the per-layer sum.
int receptive_field_closed_form(const ModelConfig& cfg);

struct RfProbeResult {
    int field = 0;
    bool lower_bound = false;  // input was shorter than the true field
};
// Empirical probe: smallest distance D such that perturbing input column
// t-1-D leaves the last embedding column bitwise unchanged (eval mode).
RfProbeResult empirical_receptive_field(const ModelConfig& cfg, const ModelParams& params,
                                        int t_len, std::uint64_t seed);

}  // namespace masa
