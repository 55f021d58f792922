#include "masa/model.hpp"

#include <algorithm>
#include <cmath>

namespace masa {

std::string to_string(FusionMode m) {
    switch (m) {
        case FusionMode::attentive: return "attentive";
        case FusionMode::concat: return "concat";
        case FusionMode::mean: return "mean";
    }
    return "?";
}
std::string to_string(SpatialOrder s) { return s == SpatialOrder::early ? "early" : "late"; }
std::string to_string(HeadKind h) { return h == HeadKind::regression ? "regression" : "classification"; }

FusionMode fusion_from_string(const std::string& s) {
    if (s == "attentive") return FusionMode::attentive;
    if (s == "concat") return FusionMode::concat;
    if (s == "mean") return FusionMode::mean;
    throw ConfigError("unknown fusion mode '" + s + "'");
}
SpatialOrder spatial_from_string(const std::string& s) {
    if (s == "early") return SpatialOrder::early;
    if (s == "late") return SpatialOrder::late;
    throw ConfigError("unknown spatial order '" + s + "'");
}
HeadKind head_from_string(const std::string& s) {
    if (s == "regression") return HeadKind::regression;
    if (s == "classification") return HeadKind::classification;
    throw ConfigError("unknown head kind '" + s + "'");
}

void ModelConfig::validate() const {
    if (num_channels < 1 || num_bands < 1 || width < 1 || tcn_kernel_len < 1 ||
        sat_dilation < 1 || num_tcn_blocks < 0)
        throw ConfigError("model sizes must be positive");
    if (anchor_lengths.empty()) throw ConfigError("at least one anchor kernel length is required");
    for (int k : anchor_lengths)
        if (k < 1) throw ConfigError("anchor kernel lengths must be positive");
    if (head == HeadKind::classification && num_classes < 2)
        throw ConfigError("classification head needs at least 2 classes");
    if (dropout_rate < 0.0 || dropout_rate >= 1.0)
        throw ConfigError("dropout rate must lie in [0, 1)");
}

int ModelConfig::branch_channels() const {
    return spatial == SpatialOrder::early ? width : width * num_channels;
}

int ModelConfig::fusion_out_channels() const {
    const int bc = branch_channels();
    return fusion == FusionMode::concat ? bc * num_anchors() : bc;
}

int ModelConfig::block_out_channels() const {
    return spatial == SpatialOrder::early ? width : width * num_channels;
}

int ModelConfig::embedding_channels() const {
    if (spatial == SpatialOrder::late) return width;  // after the trailing spatial fusion
    return num_tcn_blocks > 0 ? block_out_channels() : fusion_out_channels();
}

nlohmann::json ModelConfig::to_json() const {
    return {{"num_channels", num_channels},
            {"num_bands", num_bands},
            {"anchor_lengths", anchor_lengths},
            {"width", width},
            {"num_tcn_blocks", num_tcn_blocks},
            {"tcn_kernel_len", tcn_kernel_len},
            {"sat_dilation", sat_dilation},
            {"fusion", to_string(fusion)},
            {"spatial", to_string(spatial)},
            {"head", to_string(head)},
            {"num_classes", num_classes},
            {"mean_fusion_head", mean_fusion_head},
            {"dropout_rate", dropout_rate}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
    ModelConfig c;
    c.num_channels = j.at("num_channels").get<int>();
    c.num_bands = j.at("num_bands").get<int>();
    c.anchor_lengths = j.at("anchor_lengths").get<std::vector<int>>();
    c.width = j.at("width").get<int>();
    c.num_tcn_blocks = j.at("num_tcn_blocks").get<int>();
    c.tcn_kernel_len = j.at("tcn_kernel_len").get<int>();
    c.sat_dilation = j.at("sat_dilation").get<int>();
    c.fusion = fusion_from_string(j.at("fusion").get<std::string>());
    c.spatial = spatial_from_string(j.at("spatial").get<std::string>());
    c.head = head_from_string(j.at("head").get<std::string>());
    c.num_classes = j.at("num_classes").get<int>();
    c.mean_fusion_head = j.at("mean_fusion_head").get<bool>();
    c.dropout_rate = j.at("dropout_rate").get<double>();
    c.validate();
    return c;
}

Tensor& ModelParams::at(const std::string& name) {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw ConfigError("unknown parameter '" + name + "'");
    return it->second;
}
const Tensor& ModelParams::at(const std::string& name) const {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw ConfigError("unknown parameter '" + name + "'");
    return it->second;
}
std::int64_t ModelParams::count() const {
    std::int64_t n = 0;
    for (const auto& [name, t] : tensors) n += t.size();
    return n;
}

void for_each_param(const ModelConfig& cfg,
                    const std::function<void(const std::string&, const Shape&, ParamKind)>& fn) {
    cfg.validate();
    const int s = cfg.width;
    const int c = cfg.num_channels;
    const int f = cfg.num_bands;
    const int a = cfg.num_anchors();

    for (int i = 0; i < a; ++i) {
        const int k = cfg.anchor_lengths[static_cast<std::size_t>(i)];
        fn("sat" + std::to_string(i) + ".context", {s, 1, f, k}, ParamKind::conv);
        if (cfg.spatial == SpatialOrder::early)
            fn("sat" + std::to_string(i) + ".spatial", {s, s, c, 1}, ParamKind::conv);
    }
    if (cfg.fusion == FusionMode::attentive) {
        const int bc = cfg.branch_channels();
        fn("maaf.fusion", {bc, a * bc, 1, 1}, ParamKind::conv);
    }
    int in_ch = cfg.fusion_out_channels();
    const int out_ch = cfg.block_out_channels();
    for (int b = 1; b <= cfg.num_tcn_blocks; ++b) {
        const std::string p = "tcn" + std::to_string(b);
        fn(p + ".conv1.v", {out_ch, in_ch, 1, cfg.tcn_kernel_len}, ParamKind::wn_direction);
        fn(p + ".conv1.g", {out_ch}, ParamKind::wn_gain);
        fn(p + ".act1.alpha", {out_ch}, ParamKind::prelu_alpha);
        fn(p + ".conv2.v", {out_ch, out_ch, 1, cfg.tcn_kernel_len}, ParamKind::wn_direction);
        fn(p + ".conv2.g", {out_ch}, ParamKind::wn_gain);
        fn(p + ".act2.alpha", {out_ch}, ParamKind::prelu_alpha);
        if (in_ch != out_ch) fn(p + ".down", {out_ch, in_ch, 1, 1}, ParamKind::conv);
        fn(p + ".out.alpha", {out_ch}, ParamKind::prelu_alpha);
        in_ch = out_ch;
    }
    if (cfg.spatial == SpatialOrder::late) {
        const int last = cfg.num_tcn_blocks > 0 ? out_ch : cfg.fusion_out_channels();
        fn("spatial.late", {cfg.width, last / c, c, 1}, ParamKind::conv);
    }
    fn("head.weight", {cfg.head_out_dim(), cfg.embedding_channels()}, ParamKind::linear_weight);
    fn("head.bias", {cfg.head_out_dim()}, ParamKind::bias);
}

std::int64_t expected_param_count(const ModelConfig& cfg) {
    std::int64_t n = 0;
    for_each_param(cfg, [&](const std::string&, const Shape& s, ParamKind) { n += numel(s); });
    return n;
}

ModelParams init_params(const ModelConfig& cfg, std::uint64_t seed) {
    ModelParams out;
    int index = 0;
    std::string pending_direction;  // gains are sized from the direction they normalize
    for_each_param(cfg, [&](const std::string& name, const Shape& shape, ParamKind kind) {
        Pcg32 rng(derive_seed(seed, {seed_tag::init, static_cast<std::uint64_t>(index++)}));
        Tensor t = Tensor::zeros(shape);
        switch (kind) {
            case ParamKind::conv:
            case ParamKind::wn_direction: {
                std::int64_t fan_in = 1;
                for (std::size_t i = 1; i < shape.size(); ++i) fan_in *= shape[i];
                const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
                for (double& v : t.values) v = rng.uniform(-bound, bound);
                if (kind == ParamKind::wn_direction) pending_direction = name;
                break;
            }
            case ParamKind::wn_gain: {
                // Gain starts at the direction norm so the initial effective
                // kernel equals the raw direction.
                const Tensor& v = out.at(pending_direction);
                const std::int64_t per = v.size() / shape[0];
                for (int o = 0; o < shape[0]; ++o) {
                    double nn = 0.0;
                    const double* vs = v.values.data() + o * per;
                    for (std::int64_t i = 0; i < per; ++i) nn += vs[i] * vs[i];
                    t.values[static_cast<std::size_t>(o)] = std::sqrt(nn);
                }
                break;
            }
            case ParamKind::prelu_alpha:
                for (double& v : t.values) v = 0.25;
                break;
            case ParamKind::linear_weight: {
                const double bound = 1.0 / std::sqrt(static_cast<double>(shape.back()));
                for (double& v : t.values) v = rng.uniform(-bound, bound);
                break;
            }
            case ParamKind::bias:
                break;  // zeros
        }
        t.requires_grad = true;
        out.order.push_back(name);
        out.tensors.emplace(name, std::move(t));
    });
    return out;
}

ModelRun bind_params(Tape& tape, const ModelConfig& cfg, const ModelParams& params) {
    ModelRun run{tape, cfg, {}, false, 0, 0};
    for (const std::string& name : params.order)
        run.leaf.emplace(name, tape.push_param(params.at(name)));
    return run;
}

namespace {

int apply_dropout(ModelRun& run, int x) {
    if (!run.training || run.cfg.dropout_rate == 0.0) return x;
    Pcg32 rng(derive_seed(run.dropout_seed,
                          {seed_tag::dropout, static_cast<std::uint64_t>(run.dropout_counter++)}));
    return run.tape.dropout(x, run.cfg.dropout_rate, true, rng);
}

// Context stage of one anchor: (1, C*f, t) -> (s, C, t).
int sat_context(ModelRun& run, int x, int anchor_index) {
    const ModelConfig& cfg = run.cfg;
    const int k = cfg.anchor_lengths[static_cast<std::size_t>(anchor_index)];
    Conv2dSpec spec;
    spec.stride_h = cfg.num_bands;
    spec.dil_w = cfg.sat_dilation;
    spec.left_pad_w = (k - 1) * cfg.sat_dilation;
    return run.tape.conv2d(x, run.leaf.at("sat" + std::to_string(anchor_index) + ".context"), spec);
}

// Spatial fusion of one anchor: (s, C, t) -> (s, 1, t).
int sat_spatial(ModelRun& run, int h_context, int anchor_index) {
    return run.tape.conv2d(h_context,
                           run.leaf.at("sat" + std::to_string(anchor_index) + ".spatial"),
                           Conv2dSpec{});
}

int fuse_branches(ModelRun& run, const std::vector<int>& branches) {
    switch (run.cfg.fusion) {
        case FusionMode::attentive: {
            const int cat = run.tape.concat_axis0(branches);
            return run.tape.conv2d(cat, run.leaf.at("maaf.fusion"), Conv2dSpec{});
        }
        case FusionMode::mean:
            return run.tape.mean_of(branches);
        case FusionMode::concat:
            return run.tape.concat_axis0(branches);
    }
    throw ConfigError("unreachable fusion mode");
}

int tcn_block(ModelRun& run, int h, int block) {
    Tape& tape = run.tape;
    const ModelConfig& cfg = run.cfg;
    const std::string p = "tcn" + std::to_string(block);
    const int d = cfg.block_dilation(block);
    Conv2dSpec spec;
    spec.dil_w = d;
    spec.left_pad_w = (cfg.tcn_kernel_len - 1) * d;

    int w1 = tape.weight_norm(run.leaf.at(p + ".conv1.v"), run.leaf.at(p + ".conv1.g"));
    int c1 = tape.conv2d(h, w1, spec);
    c1 = tape.prelu(c1, run.leaf.at(p + ".act1.alpha"));
    c1 = apply_dropout(run, c1);

    int w2 = tape.weight_norm(run.leaf.at(p + ".conv2.v"), run.leaf.at(p + ".conv2.g"));
    int c2 = tape.conv2d(c1, w2, spec);
    c2 = tape.prelu(c2, run.leaf.at(p + ".act2.alpha"));
    c2 = apply_dropout(run, c2);

    int res = h;
    if (run.leaf.count(p + ".down"))
        res = tape.conv2d(h, run.leaf.at(p + ".down"), Conv2dSpec{});
    return tape.prelu(tape.add(res, c2), run.leaf.at(p + ".out.alpha"));
}

}  // namespace

int model_embedding(ModelRun& run, int x) {
    const ModelConfig& cfg = run.cfg;
    const Tensor& xt = run.tape.val(x);
    if (xt.shape.size() != 3 || xt.shape[0] != 1 || xt.shape[1] != cfg.feature_dim())
        throw DimensionError("model input must be (1, " + std::to_string(cfg.feature_dim()) +
                             ", t), got " + shape_str(xt.shape));
    const int t = xt.shape[2];

    std::vector<int> branches;
    branches.reserve(static_cast<std::size_t>(cfg.num_anchors()));
    for (int i = 0; i < cfg.num_anchors(); ++i) {
        int ctx = sat_context(run, x, i);
        int branch;
        if (cfg.spatial == SpatialOrder::early) {
            branch = apply_dropout(run, sat_spatial(run, ctx, i));
        } else {
            // Late spatial learning keeps the per-channel context maps as
            // width*C virtual channels through the residual stack.
            branch = apply_dropout(run, run.tape.reshape(ctx, {cfg.width * cfg.num_channels, 1, t}));
        }
        branches.push_back(branch);
    }
    int h = fuse_branches(run, branches);
    for (int b = 1; b <= cfg.num_tcn_blocks; ++b) h = tcn_block(run, h, b);

    if (cfg.spatial == SpatialOrder::late) {
        const int last_ch = run.tape.val(h).shape[0];
        h = run.tape.reshape(h, {last_ch / cfg.num_channels, cfg.num_channels, t});
        h = run.tape.conv2d(h, run.leaf.at("spatial.late"), Conv2dSpec{});
    }
    return h;
}

int model_regression(ModelRun& run, int x) {
    if (run.cfg.head != HeadKind::regression)
        throw ConfigError("model is configured with a classification head");
    Tape& tape = run.tape;
    int rows = tape.rows_from_channels(model_embedding(run, x));
    int y = tape.linear(rows, run.leaf.at("head.weight"), run.leaf.at("head.bias"));
    return tape.flatten(y);
}

int model_logits(ModelRun& run, int x) {
    if (run.cfg.head != HeadKind::classification)
        throw ConfigError("model is configured with a regression head");
    Tape& tape = run.tape;
    int rows = tape.rows_from_channels(model_embedding(run, x));
    int per_segment = tape.linear(rows, run.leaf.at("head.weight"), run.leaf.at("head.bias"));
    return run.cfg.mean_fusion_head ? tape.mean_rows(per_segment) : tape.last_row(per_segment);
}

int receptive_field(const ModelConfig& cfg) {
    cfg.validate();
    const int kmax = *std::max_element(cfg.anchor_lengths.begin(), cfg.anchor_lengths.end());
    int rf = 1 + (kmax - 1) * cfg.sat_dilation;
    for (int b = 1; b <= cfg.num_tcn_blocks; ++b)
        rf += 2 * (cfg.tcn_kernel_len - 1) * cfg.block_dilation(b);
    return rf;
}

int receptive_field_closed_form(const ModelConfig& cfg) {
    const int kmax = *std::max_element(cfg.anchor_lengths.begin(), cfg.anchor_lengths.end());
    const int m = cfg.num_tcn_blocks;
    return 1 + (kmax - 1) * ((1 << (m + 2)) - 3);
}

RfProbeResult empirical_receptive_field(const ModelConfig& cfg, const ModelParams& params,
                                        int t_len, std::uint64_t seed) {
    Pcg32 rng(derive_seed(seed, {seed_tag::probe}));
    Tensor x = Tensor::zeros({1, cfg.feature_dim(), t_len});
    for (double& v : x.values) v = rng.uniform(-1.0, 1.0);

    auto last_column = [&](const Tensor& xin) {
        Tape tape;
        ModelRun run = bind_params(tape, cfg, params);
        const int h = model_embedding(run, tape.push(xin));
        const Tensor& ht = tape.val(h);
        const int ch = ht.shape[0], t = ht.shape[2];
        std::vector<double> col(static_cast<std::size_t>(ch));
        for (int c = 0; c < ch; ++c)
            col[static_cast<std::size_t>(c)] = ht.values[static_cast<std::size_t>(c) * t + t - 1];
        return col;
    };

    const std::vector<double> base = last_column(x);
    // Dilated kernels leave holes in the influence set, so the field is the
    // farthest influencing column plus one, scanned from the far end. Gaps
    // between influencing distances are at most the largest layer dilation;
    // the result is exact only when at least that many consecutive
    // non-influencing distances were verified beyond the farthest hit.
    int max_gap = cfg.sat_dilation;
    for (int b = 1; b <= cfg.num_tcn_blocks; ++b)
        max_gap = std::max(max_gap, cfg.block_dilation(b));
    int farthest = 0;
    for (int dist = t_len - 1; dist >= 1; --dist) {
        Tensor probe = x;
        const int col = t_len - 1 - dist;
        for (int rowi = 0; rowi < cfg.feature_dim(); ++rowi)
            probe.values[static_cast<std::size_t>(rowi) * t_len + col] += 1.0 + rng.next_double();
        if (last_column(probe) != base) {
            farthest = dist;
            break;
        }
    }
    return {farthest + 1, (t_len - 1) - farthest < max_gap};
}

}  // namespace masa
