#pragma once

// Binary model file, little-endian throughout:
//
//   "CNNG"                     4 bytes magic
//   u16 version                currently 1
//   u32 num_networks, u32 input_dim, u32 num_classes
//   u32 metadata length, then that many bytes of UTF-8 "key=value\n" lines
//   per network (general first, then specialists in id order):
//     u32 num_layers
//     per layer: u32 input_dim, u32 output_dim, u8 activation (0 ReLU, 1 Softmax),
//                f64[output_dim * input_dim] weights (row-major), f64[output_dim] bias
//   k-means: u32 k, u32 dim, f64 inertia, u64 seed, u32 iterations_run, f64[k * dim] centroids
//   tree: u32 num_network_ids, u32 max_depth, u32 min_samples_leaf, u32 min_samples_split,
//         u8 balance_classes, u32 node_count, nodes in pre-order:
//           u8 0 (internal), u32 feature, f64 threshold, u32 right child index
//           u8 1 (leaf), u32 network_id, f64[num_network_ids] class_counts
//   u32 CRC-32 of every preceding byte
//
// A standalone network file uses magic "CNNF", the same u16 version, one
// network record as above, then the CRC-32.

#include "cnng/checksum.hpp"
#include "cnng/error.hpp"
#include "cnng/reflect.hpp"

#include <algorithm>
#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <limits>
#include <string>
#include <string_view>
#include <vector>

namespace cnng {

inline constexpr char kModelMagic[4] = {'C', 'N', 'N', 'G'};
inline constexpr char kNetworkMagic[4] = {'C', 'N', 'N', 'F'};
inline constexpr std::uint16_t kModelFormatVersion = 1;

namespace detail {

class ByteWriter {
public:
    void u8(std::uint8_t v) { bytes_.push_back(v); }
    void u16(std::uint16_t v) { put(v, 2); }
    void u32(std::size_t v)
    {
        require(v <= std::numeric_limits<std::uint32_t>::max(), ErrorCode::OutOfRange,
                "value does not fit the u32 field");
        put(v, 4);
    }
    void u64(std::uint64_t v) { put(v, 8); }
    void f64(double v) { put(std::bit_cast<std::uint64_t>(v), 8); }
    void f64s(std::span<const double> vs)
    {
        for (double v : vs)
            f64(v);
    }
    void raw(std::string_view s) { bytes_.insert(bytes_.end(), s.begin(), s.end()); }

    std::vector<unsigned char>& bytes() noexcept { return bytes_; }

private:
    void put(std::uint64_t v, int n)
    {
        for (int i = 0; i < n; ++i)
            bytes_.push_back(static_cast<unsigned char>(v >> (8 * i)));
    }

    std::vector<unsigned char> bytes_;
};

class ByteReader {
public:
    explicit ByteReader(std::span<const unsigned char> bytes) : bytes_(bytes) {}

    std::uint8_t u8() { return static_cast<std::uint8_t>(get(1)); }
    std::uint16_t u16() { return static_cast<std::uint16_t>(get(2)); }
    std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
    std::uint64_t u64() { return get(8); }
    double f64() { return std::bit_cast<double>(get(8)); }

    std::vector<double> f64s(std::size_t n)
    {
        need(n, 8);
        std::vector<double> out(n);
        for (auto& v : out)
            v = f64();
        return out;
    }

    std::string raw(std::size_t n)
    {
        need(n, 1);
        std::string out(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
        pos_ += n;
        return out;
    }

    std::size_t position() const noexcept { return pos_; }
    std::size_t remaining() const noexcept { return bytes_.size() - pos_; }

private:
    // Checked before allocating so a corrupt count cannot request huge buffers.
    void need(std::size_t count, std::size_t width) const
    {
        if (count > remaining() / width)
            fail(ErrorCode::Truncated, "model file ends before the declared payload");
    }

    std::uint64_t get(int n)
    {
        need(static_cast<std::size_t>(n), 1);
        std::uint64_t v = 0;
        for (int i = 0; i < n; ++i)
            v |= std::uint64_t{bytes_[pos_ + static_cast<std::size_t>(i)]} << (8 * i);
        pos_ += static_cast<std::size_t>(n);
        return v;
    }

    std::span<const unsigned char> bytes_;
    std::size_t pos_ = 0;
};

inline std::string encode_metadata(const Metadata& meta)
{
    std::string out;
    for (const auto& [k, v] : meta) {
        require(k.find_first_of("=\n") == std::string::npos && v.find('\n') == std::string::npos,
                ErrorCode::InvalidArgument, "metadata keys may not contain '=' or newlines");
        out += k;
        out += '=';
        out += v;
        out += '\n';
    }
    return out;
}

inline Metadata decode_metadata(std::string_view text)
{
    Metadata meta;
    while (!text.empty()) {
        const auto eol = text.find('\n');
        if (eol == std::string_view::npos)
            fail(ErrorCode::Malformed, "metadata line is not newline-terminated");
        const auto line = text.substr(0, eol);
        const auto eq = line.find('=');
        if (eq == std::string_view::npos)
            fail(ErrorCode::Malformed, "metadata line lacks '='");
        meta.emplace_back(std::string(line.substr(0, eq)), std::string(line.substr(eq + 1)));
        text.remove_prefix(eol + 1);
    }
    return meta;
}

inline void write_network(ByteWriter& w, const FeedforwardNetwork& net)
{
    w.u32(net.layers().size());
    for (const auto& layer : net.layers()) {
        w.u32(layer.input_dim());
        w.u32(layer.output_dim());
        w.u8(static_cast<std::uint8_t>(layer.activation));
        w.f64s(layer.weights.values());
        w.f64s(layer.bias);
    }
}

inline FeedforwardNetwork read_network(ByteReader& r)
{
    const auto num_layers = r.u32();
    require(num_layers >= 1, ErrorCode::Malformed, "network has no layers");
    std::vector<Layer> layers;
    for (std::uint32_t l = 0; l < num_layers; ++l) {
        const std::size_t in = r.u32();
        const std::size_t out = r.u32();
        const auto act = r.u8();
        require(in >= 1 && out >= 1, ErrorCode::Malformed, "layer has a zero dimension");
        require(act <= 1, ErrorCode::Malformed, "unknown activation tag");
        require(in <= r.remaining() / 8 / out, ErrorCode::Truncated, "model file ends inside a weight matrix");
        Layer layer;
        layer.weights = Matrix(out, in, r.f64s(in * out));
        layer.bias = r.f64s(out);
        layer.activation = static_cast<Activation>(act);
        layers.push_back(std::move(layer));
    }
    try {
        return FeedforwardNetwork(std::move(layers));
    } catch (const Error& e) {
        fail(ErrorCode::Malformed, std::string("invalid network: ") + e.what());
    }
}

inline void check_header(std::span<const unsigned char> bytes, const char (&magic)[4], ByteReader& r)
{
    if (bytes.size() < 6)
        fail(ErrorCode::Truncated, "file is shorter than its header");
    if (!std::equal(magic, magic + 4, bytes.begin()))
        fail(ErrorCode::BadMagic, std::string("missing magic ") + std::string(magic, 4));
    r.raw(4);
    const auto version = r.u16();
    if (version != kModelFormatVersion)
        fail(ErrorCode::VersionMismatch, "format version " + std::to_string(version) + " is not supported (expected " +
                                             std::to_string(kModelFormatVersion) + ")");
}

inline void check_trailer(std::span<const unsigned char> bytes, ByteReader& r)
{
    const std::size_t body = r.position();
    const std::uint32_t stored = r.u32();
    if (r.remaining() != 0)
        fail(ErrorCode::Malformed, "trailing bytes after the checksum");
    if (crc32(bytes.first(body)) != stored)
        fail(ErrorCode::ChecksumMismatch, "checksum does not match the file contents");
}

inline std::vector<unsigned char> read_bytes(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        fail(ErrorCode::Io, "cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_bytes(const std::filesystem::path& path, std::span<const unsigned char> bytes)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        fail(ErrorCode::Io, "cannot open " + path.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out)
        fail(ErrorCode::Io, "failed writing " + path.string());
}

} // namespace detail

inline std::vector<unsigned char> serialize_model(const CnngModel& model)
{
    model.validate();
    detail::ByteWriter w;
    w.raw({kModelMagic, 4});
    w.u16(kModelFormatVersion);
    w.u32(model.num_networks());
    w.u32(model.input_dim());
    w.u32(model.num_classes);

    const auto meta = detail::encode_metadata(model.metadata);
    w.u32(meta.size());
    w.raw(meta);

    for (std::size_t id = 0; id < model.num_networks(); ++id)
        detail::write_network(w, model.network(id));

    const auto& km = model.kmeans;
    w.u32(km.k());
    w.u32(km.dim());
    w.f64(km.inertia);
    w.u64(km.seed);
    w.u32(km.iterations_run);
    w.f64s(km.centroids.values());

    const auto& tree = model.task_classifier;
    w.u32(tree.num_network_ids);
    w.u32(tree.params.max_depth);
    w.u32(tree.params.min_samples_leaf);
    w.u32(tree.params.min_samples_split);
    w.u8(tree.params.balance_classes ? 1 : 0);
    w.u32(tree.nodes.size());
    for (const auto& node : tree.nodes) {
        if (node.leaf) {
            w.u8(1);
            w.u32(node.network_id);
            w.f64s(node.class_counts);
        } else {
            w.u8(0);
            w.u32(node.feature);
            w.f64(node.threshold);
            w.u32(node.right);
        }
    }

    auto& bytes = w.bytes();
    w.u32(crc32(bytes));
    return std::move(bytes);
}

inline CnngModel deserialize_model(std::span<const unsigned char> bytes)
{
    detail::ByteReader r(bytes);
    detail::check_header(bytes, kModelMagic, r);
    CnngModel model;
    const std::size_t num_networks = r.u32();
    const std::size_t input_dim = r.u32();
    model.num_classes = r.u32();
    detail::require(num_networks >= 2, ErrorCode::Malformed, "model needs a general network and a specialist");

    const std::size_t meta_len = r.u32();
    model.metadata = detail::decode_metadata(r.raw(meta_len));

    model.general = detail::read_network(r);
    for (std::size_t id = 1; id < num_networks; ++id)
        model.specialists.push_back(detail::read_network(r));
    detail::require(model.general.input_dim() == input_dim, ErrorCode::Malformed,
                    "header input dimension disagrees with the general network");

    const std::size_t k = r.u32();
    const std::size_t dim = r.u32();
    model.kmeans.inertia = r.f64();
    model.kmeans.seed = r.u64();
    model.kmeans.iterations_run = r.u32();
    detail::require(k >= 1 && dim >= 1, ErrorCode::Malformed, "empty centroid table");
    detail::require(dim <= r.remaining() / 8 / k, ErrorCode::Truncated, "model file ends inside the centroids");
    model.kmeans.centroids = Matrix(k, dim, r.f64s(k * dim));

    auto& tree = model.task_classifier;
    tree.num_network_ids = r.u32();
    tree.params.max_depth = r.u32();
    tree.params.min_samples_leaf = r.u32();
    tree.params.min_samples_split = r.u32();
    tree.params.balance_classes = r.u8() != 0;
    const std::size_t node_count = r.u32();
    detail::require(node_count >= 1, ErrorCode::Malformed, "router has no nodes");
    detail::require(node_count <= r.remaining() / 5, ErrorCode::Truncated, "model file ends inside the router");
    tree.nodes.reserve(node_count);
    for (std::size_t i = 0; i < node_count; ++i) {
        TreeNode node;
        const auto tag = r.u8();
        if (tag == 1) {
            node.leaf = true;
            node.network_id = r.u32();
            node.class_counts = r.f64s(tree.num_network_ids);
        } else if (tag == 0) {
            node.leaf = false;
            node.feature = r.u32();
            node.threshold = r.f64();
            node.right = r.u32();
            detail::require(node.right > i + 1 && node.right < node_count, ErrorCode::Malformed,
                            "router child index out of order");
        } else {
            detail::fail(ErrorCode::Malformed, "unknown router node tag");
        }
        tree.nodes.push_back(std::move(node));
    }

    detail::check_trailer(bytes, r);

    try {
        model.validate();
    } catch (const Error& e) {
        detail::fail(ErrorCode::Malformed, e.what());
    }
    return model;
}

inline void save_model(const CnngModel& model, const std::filesystem::path& path)
{
    detail::write_bytes(path, serialize_model(model));
}

inline CnngModel load_model(const std::filesystem::path& path)
{
    return deserialize_model(detail::read_bytes(path));
}

inline std::vector<unsigned char> serialize_network(const FeedforwardNetwork& net)
{
    detail::ByteWriter w;
    w.raw({kNetworkMagic, 4});
    w.u16(kModelFormatVersion);
    detail::write_network(w, net);
    auto& bytes = w.bytes();
    w.u32(crc32(bytes));
    return std::move(bytes);
}

inline FeedforwardNetwork deserialize_network(std::span<const unsigned char> bytes)
{
    detail::ByteReader r(bytes);
    detail::check_header(bytes, kNetworkMagic, r);
    auto net = detail::read_network(r);
    detail::check_trailer(bytes, r);
    return net;
}

inline void save_network(const FeedforwardNetwork& net, const std::filesystem::path& path)
{
    detail::write_bytes(path, serialize_network(net));
}

inline FeedforwardNetwork load_network(const std::filesystem::path& path)
{
    return deserialize_network(detail::read_bytes(path));
}

} // namespace cnng
