#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ddreg/graph.hpp"
#include "ddreg/volume.hpp"

namespace ddreg {

// U-Net variant: per encoder level conv(3^3)+LeakyReLU then maxpool/2; the
// decoder mirrors with conv+LeakyReLU then nearest-neighbour upsample and a
// skip concatenation at each resolution; head is two convs of head_filters
// with LeakyReLU plus a linear 3-filter output conv. The output is the
// displacement map in millimetres.
struct NetConfig {
    int depth = 6;
    std::vector<int> filters = {32, 64, 128, 256, 512, 1024};
    int head_filters = 16;
    double leaky_slope = 0.2;
    int input_channels = 2;
    int output_channels = 3;

    void validate() const;
    // Also checks spatial divisibility by 2^depth.
    void validate_input_shape(const std::array<int, 3>& shape) const;
};

struct Parameter {
    std::string name;
    std::vector<int> shape;
    std::vector<double> value;
    std::vector<double> grad;  // accumulated across samples; owner resets
    bool trainable = true;

    std::int64_t numel() const {
        std::int64_t n = 1;
        for (int d : shape) n *= d;
        return n;
    }
};

// Named tensors in stable registration order. Names are unique; the
// encoder/decoder/head split is carried in the "enc." / "dec." / "head."
// name prefixes.
class ParameterStore {
public:
    Parameter& add(const std::string& name, std::vector<int> shape, bool trainable = true);
    Parameter& get(const std::string& name);
    const Parameter& get(const std::string& name) const;
    bool contains(const std::string& name) const;

    std::vector<Parameter>& all() { return params_; }
    const std::vector<Parameter>& all() const { return params_; }

    void zero_grads();
    void set_trainable_prefix(const std::string& prefix, bool trainable);
    void set_all_trainable(bool trainable);

private:
    std::vector<Parameter> params_;
};

std::int64_t count_parameters(const ParameterStore& store);
std::int64_t count_parameters(const ParameterStore& store, const std::string& prefix);
std::int64_t count_trainable_parameters(const ParameterStore& store);

// Registers and initializes all U-Net tensors. Kernels draw from
// U(-sqrt(1/fan_in), +sqrt(1/fan_in)); biases are zero; the output conv is
// zero so an untrained net predicts the identity warp.
ParameterStore init_unet_params(const NetConfig& cfg, std::uint64_t seed);

// Builds the forward graph; returns the displacement-map node
// (1, 3, X, Y, Z). Parameter leaves are collected into `leaves` in store
// order so callers can read back gradients after backward(). With
// grad_enabled false every leaf is constant (validation/inference pass).
ad::NodePtr unet_graph(const Volume& fixed, const Volume& moving, ParameterStore& store,
                       const NetConfig& cfg, std::vector<std::pair<Parameter*, ad::NodePtr>>& leaves,
                       bool grad_enabled = true);

// Inference-only forward pass; output field lives on the fixed image's grid.
DisplacementField unet_forward(const Volume& fixed, const Volume& moving, ParameterStore& store,
                               const NetConfig& cfg);

DisplacementField field_from_node(const ad::NodePtr& phi, const Grid& grid);

// Checkpoint = JSON manifest (names, shapes, trainable flags, optimizer
// metadata) at `path` + f64 little-endian blob at path + ".bin". Round trip
// is bit-exact.
void save_checkpoint(const ParameterStore& store, const std::string& path,
                     const std::string& meta_json = "{}");
ParameterStore load_checkpoint(const std::string& path, std::string* meta_json = nullptr);

}  // namespace ddreg
