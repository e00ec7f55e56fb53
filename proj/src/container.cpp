#include "lf/container.hpp"

#include "lf/errors.hpp"

#include "json.hpp"

#include <algorithm>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>

namespace lf {

namespace {

constexpr char kMagic[4] = {'L', 'F', 'T', 'C'};
constexpr unsigned char kVersion = 1;

int role_rank(TensorRole r) {
    switch (r) {
        case TensorRole::weight: return 0;
        case TensorRole::bias: return 1;
        case TensorRole::mask: return 2;
        case TensorRole::codebook: return 3;
    }
    return 3;
}

std::size_t dtype_size(const std::string& dtype) {
    if (dtype == "f64") return 8;
    if (dtype == "f32") return 4;
    throw FormatError("unknown dtype: " + dtype);
}

} // namespace

std::string role_name(TensorRole r) {
    switch (r) {
        case TensorRole::weight: return "weight";
        case TensorRole::bias: return "bias";
        case TensorRole::mask: return "mask";
        case TensorRole::codebook: return "codebook";
    }
    return "weight";
}

TensorRole role_from_name(const std::string& name) {
    if (name == "weight") return TensorRole::weight;
    if (name == "bias") return TensorRole::bias;
    if (name == "mask") return TensorRole::mask;
    if (name == "codebook") return TensorRole::codebook;
    throw FormatError("unknown tensor role: " + name);
}

std::size_t TensorEntry::element_count() const {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return n;
}

void write_file_atomic(const std::string& path, const std::string& bytes) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("cannot write: " + tmp);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw Error("short write: " + tmp);
    }
    std::filesystem::rename(tmp, path);
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open: " + path);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return bytes;
}

void save_container(const TensorContainer& c, const std::string& path) {
    std::vector<const TensorEntry*> order;
    order.reserve(c.entries.size());
    for (const TensorEntry& e : c.entries) order.push_back(&e);
    std::stable_sort(order.begin(), order.end(), [](const TensorEntry* a, const TensorEntry* b) {
        if (a->layer_index != b->layer_index) return a->layer_index < b->layer_index;
        if (role_rank(a->role) != role_rank(b->role))
            return role_rank(a->role) < role_rank(b->role);
        return a->name < b->name;
    });

    nlohmann::json manifest;
    manifest["loss"] = c.loss;
    manifest["entries"] = nlohmann::json::array();
    std::string payload;
    for (const TensorEntry* e : order) {
        if (e->values.size() != e->element_count())
            throw ValidationError("tensor " + e->name + " value count does not match shape");
        const std::size_t offset = payload.size();
        if (e->dtype == "f64") {
            payload.resize(offset + 8 * e->values.size());
            std::memcpy(payload.data() + offset, e->values.data(), 8 * e->values.size());
        } else if (e->dtype == "f32") {
            std::vector<float> narrow(e->values.size());
            for (std::size_t i = 0; i < narrow.size(); ++i)
                narrow[i] = static_cast<float>(e->values[i]); // round to nearest f32
            payload.resize(offset + 4 * narrow.size());
            std::memcpy(payload.data() + offset, narrow.data(), 4 * narrow.size());
        } else {
            throw ValidationError("unknown dtype: " + e->dtype);
        }
        manifest["entries"].push_back({{"name", e->name},
                                       {"dtype", e->dtype},
                                       {"shape", e->shape},
                                       {"byte_offset", offset},
                                       {"role", role_name(e->role)},
                                       {"layer_index", e->layer_index},
                                       {"activation", e->activation}});
    }

    const std::string mbytes = manifest.dump();
    if (mbytes.size() > 0xFFFFFFFFull) throw ValidationError("manifest too large");

    std::string bytes;
    bytes.append(kMagic, 4);
    bytes.push_back(static_cast<char>(kVersion));
    const std::uint32_t mlen = static_cast<std::uint32_t>(mbytes.size());
    for (int b = 0; b < 4; ++b)
        bytes.push_back(static_cast<char>((mlen >> (8 * b)) & 0xFF));
    bytes += mbytes;
    bytes += payload;
    write_file_atomic(path, bytes);
}

TensorContainer load_container(const std::string& path) {
    const std::string bytes = read_file(path);
    if (bytes.size() < 9 || std::memcmp(bytes.data(), kMagic, 4) != 0)
        throw FormatError("bad magic: not an LFTC container");
    if (static_cast<unsigned char>(bytes[4]) != kVersion)
        throw FormatError("unsupported container version " +
                          std::to_string(static_cast<unsigned>(bytes[4])));
    std::uint32_t mlen = 0;
    for (int b = 0; b < 4; ++b)
        mlen |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[5 + b])) << (8 * b);
    if (bytes.size() < 9ull + mlen) throw FormatError("corrupt container: truncated manifest");

    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(bytes.substr(9, mlen));
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("corrupt manifest: ") + e.what());
    }

    const std::size_t payload_start = 9ull + mlen;
    const std::size_t payload_size = bytes.size() - payload_start;

    TensorContainer out;
    try {
        out.loss = manifest.value("loss", std::string("mse"));
        struct Span {
            std::size_t begin, end;
            std::string name;
        };
        std::vector<Span> spans;
        for (const nlohmann::json& je : manifest.at("entries")) {
            TensorEntry e;
            e.name = je.at("name").get<std::string>();
            e.dtype = je.at("dtype").get<std::string>();
            e.shape = je.at("shape").get<std::vector<std::size_t>>();
            e.role = role_from_name(je.at("role").get<std::string>());
            e.layer_index = je.at("layer_index").get<int>();
            e.activation = je.value("activation", std::string());
            const std::size_t offset = je.at("byte_offset").get<std::size_t>();
            const std::size_t nbytes = e.element_count() * dtype_size(e.dtype);
            if (offset + nbytes > payload_size)
                throw FormatError("corrupt container: tensor " + e.name +
                                  " extends past the payload");
            spans.push_back({offset, offset + nbytes, e.name});

            e.values.resize(e.element_count());
            const char* src = bytes.data() + payload_start + offset;
            if (e.dtype == "f64") {
                std::memcpy(e.values.data(), src, nbytes);
            } else {
                std::vector<float> narrow(e.element_count());
                std::memcpy(narrow.data(), src, nbytes);
                for (std::size_t i = 0; i < narrow.size(); ++i)
                    e.values[i] = static_cast<double>(narrow[i]); // exact widening
            }
            out.entries.push_back(std::move(e));
        }
        std::sort(spans.begin(), spans.end(),
                  [](const Span& a, const Span& b) { return a.begin < b.begin; });
        for (std::size_t i = 1; i < spans.size(); ++i)
            if (spans[i].begin < spans[i - 1].end)
                throw FormatError("corrupt container: overlapping tensors " +
                                  spans[i - 1].name + " and " + spans[i].name);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("corrupt manifest: ") + e.what());
    }
    return out;
}

TensorContainer container_from_model(const NetworkModel& model) {
    model.validate();
    TensorContainer c;
    c.loss = loss_name(model.loss);
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        const Layer& layer = model.layers[l];
        TensorEntry w;
        w.name = "layer" + std::to_string(l) + ".weight";
        w.shape = {layer.weights.rows, layer.weights.cols};
        w.role = TensorRole::weight;
        w.layer_index = static_cast<int>(l);
        w.activation = activation_name(layer.activation);
        w.values = layer.weights.data;
        c.entries.push_back(std::move(w));

        TensorEntry b;
        b.name = "layer" + std::to_string(l) + ".bias";
        b.shape = {layer.bias.size()};
        b.role = TensorRole::bias;
        b.layer_index = static_cast<int>(l);
        b.values = layer.bias;
        c.entries.push_back(std::move(b));
    }
    return c;
}

NetworkModel model_from_container(const TensorContainer& c) {
    std::map<int, const TensorEntry*> weights;
    std::map<int, const TensorEntry*> biases;
    int max_layer = -1;
    for (const TensorEntry& e : c.entries) {
        if (e.role == TensorRole::weight) {
            if (weights.count(e.layer_index))
                throw FormatError("schema: duplicate weight for layer " +
                                  std::to_string(e.layer_index));
            weights[e.layer_index] = &e;
            max_layer = std::max(max_layer, e.layer_index);
        } else if (e.role == TensorRole::bias) {
            if (biases.count(e.layer_index))
                throw FormatError("schema: duplicate bias for layer " +
                                  std::to_string(e.layer_index));
            biases[e.layer_index] = &e;
            max_layer = std::max(max_layer, e.layer_index);
        }
    }
    if (max_layer < 0) throw FormatError("schema: container holds no layers");

    NetworkModel model;
    model.loss = loss_from_name(c.loss);
    for (int l = 0; l <= max_layer; ++l) {
        auto wit = weights.find(l);
        auto bit = biases.find(l);
        if (wit == weights.end())
            throw FormatError("schema: missing weight for layer " + std::to_string(l));
        if (bit == biases.end())
            throw FormatError("schema: missing bias for layer " + std::to_string(l));
        const TensorEntry& w = *wit->second;
        const TensorEntry& b = *bit->second;
        if (w.shape.size() != 2)
            throw FormatError("schema: weight tensor must be 2-d");
        if (b.shape.size() != 1 || b.shape[0] != w.shape[1])
            throw FormatError("schema: bias length must match weight columns");
        Layer layer;
        layer.weights = Matrix(w.shape[0], w.shape[1], w.values);
        layer.bias = b.values;
        layer.activation = activation_from_name(
            w.activation.empty() ? "identity" : w.activation);
        model.layers.push_back(std::move(layer));
    }
    model.validate();
    return model;
}

void save_model(const NetworkModel& model, const std::string& path) {
    save_container(container_from_model(model), path);
}

NetworkModel load_model(const std::string& path) {
    return model_from_container(load_container(path));
}

void append_mask(TensorContainer& c, const PruneMask& mask) {
    for (std::size_t l = 0; l < mask.masks.size(); ++l) {
        TensorEntry e;
        e.name = "layer" + std::to_string(l) + ".mask";
        e.shape = {mask.masks[l].rows, mask.masks[l].cols};
        e.role = TensorRole::mask;
        e.layer_index = static_cast<int>(l);
        e.values = mask.masks[l].data;
        c.entries.push_back(std::move(e));
    }
}

void append_codebook(TensorContainer& c, const Codebook& codebook) {
    for (std::size_t l = 0; l < codebook.layers.size(); ++l) {
        const LayerCodebook& cb = codebook.layers[l];
        TensorEntry cents;
        cents.name = "layer" + std::to_string(l) + ".codebook.centroids";
        cents.shape = {cb.centroids.size()};
        cents.role = TensorRole::codebook;
        cents.layer_index = static_cast<int>(l);
        cents.values = cb.centroids;
        c.entries.push_back(std::move(cents));

        TensorEntry asg;
        asg.name = "layer" + std::to_string(l) + ".codebook.assignments";
        asg.shape = {cb.assignments.size()};
        asg.role = TensorRole::codebook;
        asg.layer_index = static_cast<int>(l);
        asg.values.reserve(cb.assignments.size());
        for (std::size_t a : cb.assignments) asg.values.push_back(static_cast<double>(a));
        c.entries.push_back(std::move(asg));
    }
}

} // namespace lf
