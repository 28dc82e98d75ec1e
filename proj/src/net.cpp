#include "ddreg/net.hpp"

#include <bit>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "ddreg/rng.hpp"

namespace ddreg {

void NetConfig::validate() const {
    if (depth < 1) throw ValidationError("NetConfig: depth must be >= 1");
    if (static_cast<int>(filters.size()) != depth)
        throw ValidationError("NetConfig: filters count must equal depth");
    for (int f : filters)
        if (f < 1) throw ValidationError("NetConfig: filter counts must be >= 1");
    if (head_filters < 1) throw ValidationError("NetConfig: head_filters must be >= 1");
    if (!(leaky_slope > 0 && leaky_slope < 1))
        throw ValidationError("NetConfig: leaky_slope must be in (0,1)");
    if (input_channels != 2) throw ValidationError("NetConfig: input_channels must be 2");
    if (output_channels != 3) throw ValidationError("NetConfig: output_channels must be 3");
}

void NetConfig::validate_input_shape(const std::array<int, 3>& shape) const {
    validate();
    int div = 1 << depth;
    for (int a = 0; a < 3; ++a)
        if (shape[a] % div != 0)
            throw ValidationError("NetConfig: input dim " + std::to_string(shape[a]) +
                                  " not divisible by 2^depth = " + std::to_string(div));
}

Parameter& ParameterStore::add(const std::string& name, std::vector<int> shape, bool trainable) {
    if (contains(name)) throw ValidationError("ParameterStore: duplicate name " + name);
    Parameter p;
    p.name = name;
    p.shape = std::move(shape);
    p.trainable = trainable;
    p.value.assign(p.numel(), 0.0);
    p.grad.assign(p.numel(), 0.0);
    params_.push_back(std::move(p));
    return params_.back();
}

Parameter& ParameterStore::get(const std::string& name) {
    for (auto& p : params_)
        if (p.name == name) return p;
    throw ValidationError("ParameterStore: unknown parameter " + name);
}

const Parameter& ParameterStore::get(const std::string& name) const {
    for (const auto& p : params_)
        if (p.name == name) return p;
    throw ValidationError("ParameterStore: unknown parameter " + name);
}

bool ParameterStore::contains(const std::string& name) const {
    for (const auto& p : params_)
        if (p.name == name) return true;
    return false;
}

void ParameterStore::zero_grads() {
    for (auto& p : params_) std::fill(p.grad.begin(), p.grad.end(), 0.0);
}

void ParameterStore::set_trainable_prefix(const std::string& prefix, bool trainable) {
    for (auto& p : params_)
        if (p.name.rfind(prefix, 0) == 0) p.trainable = trainable;
}

void ParameterStore::set_all_trainable(bool trainable) {
    for (auto& p : params_) p.trainable = trainable;
}

std::int64_t count_parameters(const ParameterStore& store) {
    std::int64_t n = 0;
    for (const auto& p : store.all()) n += p.numel();
    return n;
}

std::int64_t count_parameters(const ParameterStore& store, const std::string& prefix) {
    std::int64_t n = 0;
    for (const auto& p : store.all())
        if (p.name.rfind(prefix, 0) == 0) n += p.numel();
    return n;
}

std::int64_t count_trainable_parameters(const ParameterStore& store) {
    std::int64_t n = 0;
    for (const auto& p : store.all())
        if (p.trainable) n += p.numel();
    return n;
}

namespace {

void init_kernel(Parameter& p, int fan_in, Rng& rng) {
    double bound = std::sqrt(1.0 / fan_in);
    for (auto& v : p.value) v = rng.uniform(-bound, bound);
}

struct LayerSpec {
    std::string name;
    int in_c, out_c;
};

// Channel bookkeeping shared by init and graph construction.
std::vector<LayerSpec> layer_specs(const NetConfig& cfg) {
    std::vector<LayerSpec> specs;
    int c = cfg.input_channels;
    for (int l = 0; l < cfg.depth; ++l) {
        specs.push_back({"enc." + std::to_string(l) + ".conv", c, cfg.filters[l]});
        c = cfg.filters[l];
    }
    for (int l = cfg.depth - 1; l >= 0; --l) {
        specs.push_back({"dec." + std::to_string(l) + ".conv", c, cfg.filters[l]});
        c = cfg.filters[l] + cfg.filters[l];  // upsampled + skip concat
    }
    specs.push_back({"head.0.conv", c, cfg.head_filters});
    specs.push_back({"head.1.conv", cfg.head_filters, cfg.head_filters});
    specs.push_back({"head.out", cfg.head_filters, cfg.output_channels});
    return specs;
}

}  // namespace

ParameterStore init_unet_params(const NetConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    ParameterStore store;
    Rng rng = Rng::keyed(seed, 0, /*stream=*/7);
    for (const auto& spec : layer_specs(cfg)) {
        Parameter& k = store.add(spec.name + ".kernel", {spec.out_c, spec.in_c, 3, 3, 3});
        Parameter& b = store.add(spec.name + ".bias", {spec.out_c});
        (void)b;  // biases stay zero
        if (spec.name != "head.out") init_kernel(k, spec.in_c * 27, rng);
        // head.out stays zero: identity warp at initialization
    }
    return store;
}

namespace {

ad::NodePtr param_leaf(Parameter& p, std::vector<std::pair<Parameter*, ad::NodePtr>>& leaves,
                       bool grad_enabled) {
    ad::Shape s;
    if (p.shape.size() == 5) {
        s = {p.shape[0], p.shape[1], p.shape[2], p.shape[3], p.shape[4]};
    } else if (p.shape.size() == 1) {
        s = {1, p.shape[0], 1, 1, 1};
    } else {
        throw ShapeError("param_leaf: unsupported parameter rank");
    }
    auto node = ad::leaf(s, p.value, grad_enabled && p.trainable, p.name.c_str());
    leaves.push_back({&p, node});
    return node;
}

}  // namespace

ad::NodePtr unet_graph(const Volume& fixed, const Volume& moving, ParameterStore& store,
                       const NetConfig& cfg, std::vector<std::pair<Parameter*, ad::NodePtr>>& leaves,
                       bool grad_enabled) {
    cfg.validate_input_shape(fixed.grid.shape);
    if (!(fixed.grid == moving.grid)) throw ShapeError("unet_graph: fixed/moving grids differ");

    const auto& sh = fixed.grid.shape;
    ad::Shape in_shape{1, 2, sh[0], sh[1], sh[2]};
    std::vector<double> two_channel(in_shape.numel());
    std::copy(fixed.data.begin(), fixed.data.end(), two_channel.begin());
    std::copy(moving.data.begin(), moving.data.end(), two_channel.begin() + fixed.data.size());
    ad::NodePtr x = ad::constant(in_shape, std::move(two_channel), "input");

    auto conv_block = [&](const ad::NodePtr& in, const std::string& name) {
        auto k = param_leaf(store.get(name + ".kernel"), leaves, grad_enabled);
        auto b = param_leaf(store.get(name + ".bias"), leaves, grad_enabled);
        return ad::conv3d(in, k, b);
    };

    std::vector<ad::NodePtr> skips;
    for (int l = 0; l < cfg.depth; ++l) {
        x = ad::leaky_relu(conv_block(x, "enc." + std::to_string(l) + ".conv"), cfg.leaky_slope);
        skips.push_back(x);
        x = ad::maxpool3d(x);
    }
    for (int l = cfg.depth - 1; l >= 0; --l) {
        x = ad::leaky_relu(conv_block(x, "dec." + std::to_string(l) + ".conv"), cfg.leaky_slope);
        x = ad::upsample_nn(x);
        x = ad::concat_channels(x, skips[l]);
    }
    x = ad::leaky_relu(conv_block(x, "head.0.conv"), cfg.leaky_slope);
    x = ad::leaky_relu(conv_block(x, "head.1.conv"), cfg.leaky_slope);
    return conv_block(x, "head.out");
}

DisplacementField field_from_node(const ad::NodePtr& phi, const Grid& grid) {
    if (phi->shape.c != 3 || phi->shape.spatial() != grid.voxel_count())
        throw ShapeError("field_from_node: node is not a 3-channel field of the grid size");
    DisplacementField f(grid);
    std::int64_t v = grid.voxel_count();
    for (std::int64_t i = 0; i < v; ++i)
        f.vectors[i] = {phi->value[i], phi->value[v + i], phi->value[2 * v + i]};
    return f;
}

DisplacementField unet_forward(const Volume& fixed, const Volume& moving, ParameterStore& store,
                               const NetConfig& cfg) {
    std::vector<std::pair<Parameter*, ad::NodePtr>> leaves;
    ad::NodePtr phi = unet_graph(fixed, moving, store, cfg, leaves, /*grad_enabled=*/false);
    return field_from_node(phi, fixed.grid);
}

// ---------------------------------------------------------------------------
// checkpoints

static_assert(std::endian::native == std::endian::little,
              "checkpoint blobs are little-endian; big-endian hosts are unsupported");

void save_checkpoint(const ParameterStore& store, const std::string& path, const std::string& meta_json) {
    nlohmann::json manifest;
    manifest["format"] = "ddreg-checkpoint-v1";
    manifest["dtype"] = "f64";
    manifest["endianness"] = "little";
    manifest["meta"] = nlohmann::json::parse(meta_json);
    manifest["params"] = nlohmann::json::array();
    std::int64_t offset = 0;
    for (const auto& p : store.all()) {
        manifest["params"].push_back({{"name", p.name},
                                      {"shape", p.shape},
                                      {"trainable", p.trainable},
                                      {"offset", offset}});
        offset += p.numel();
    }
    manifest["total"] = offset;

    std::ofstream mh(path, std::ios::trunc);
    if (!mh) throw IoError("checkpoint: cannot open for writing: " + path);
    mh << manifest.dump(2) << "\n";
    if (!mh) throw IoError("checkpoint: short write: " + path);

    std::ofstream blob(path + ".bin", std::ios::binary | std::ios::trunc);
    if (!blob) throw IoError("checkpoint: cannot open blob: " + path + ".bin");
    for (const auto& p : store.all())
        blob.write(reinterpret_cast<const char*>(p.value.data()),
                   static_cast<std::streamsize>(p.value.size() * sizeof(double)));
    if (!blob) throw IoError("checkpoint: short blob write: " + path + ".bin");
}

ParameterStore load_checkpoint(const std::string& path, std::string* meta_json) {
    std::ifstream mh(path);
    if (!mh) throw IoError("checkpoint: cannot open: " + path);
    nlohmann::json manifest;
    try {
        mh >> manifest;
    } catch (const nlohmann::json::exception& e) {
        throw IoError("checkpoint: malformed manifest " + path + ": " + e.what());
    }
    if (manifest.value("format", "") != "ddreg-checkpoint-v1")
        throw IoError("checkpoint: unrecognized format in " + path);
    if (meta_json) *meta_json = manifest.value("meta", nlohmann::json::object()).dump();

    ParameterStore store;
    std::ifstream blob(path + ".bin", std::ios::binary);
    if (!blob) throw IoError("checkpoint: cannot open blob: " + path + ".bin");
    for (const auto& jp : manifest.at("params")) {
        Parameter& p = store.add(jp.at("name").get<std::string>(),
                                 jp.at("shape").get<std::vector<int>>(),
                                 jp.at("trainable").get<bool>());
        blob.seekg(jp.at("offset").get<std::int64_t>() * static_cast<std::int64_t>(sizeof(double)));
        blob.read(reinterpret_cast<char*>(p.value.data()),
                  static_cast<std::streamsize>(p.value.size() * sizeof(double)));
        if (!blob) throw IoError("checkpoint: short blob read for " + p.name);
    }
    return store;
}

}  // namespace ddreg
