#pragma once

// Fixtures shared by the unit, CLI and acceptance tests.

#include "cnng/dataset.hpp"
#include "cnng/rng.hpp"

#include <unistd.h>

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

namespace cnng::fixtures {

/// Fresh directory, private to this process.
inline std::filesystem::path scratch_dir(const std::string& name)
{
    auto dir = std::filesystem::temp_directory_path() / ("cnng-test-" + std::to_string(::getpid())) / name;
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

inline void write_file(const std::filesystem::path& path, const std::vector<unsigned char>& bytes)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

inline void put_be32(std::vector<unsigned char>& b, std::uint32_t v)
{
    for (int s = 24; s >= 0; s -= 8)
        b.push_back(static_cast<unsigned char>(v >> s));
}

inline std::vector<unsigned char> idx_images(std::uint32_t n, std::uint32_t rows, std::uint32_t cols,
                                             const std::vector<unsigned char>& pixels)
{
    std::vector<unsigned char> b;
    put_be32(b, 0x00000803);
    put_be32(b, n);
    put_be32(b, rows);
    put_be32(b, cols);
    b.insert(b.end(), pixels.begin(), pixels.end());
    return b;
}

inline std::vector<unsigned char> idx_labels(const std::vector<unsigned char>& labels)
{
    std::vector<unsigned char> b;
    put_be32(b, 0x00000801);
    put_be32(b, static_cast<std::uint32_t>(labels.size()));
    b.insert(b.end(), labels.begin(), labels.end());
    return b;
}

struct IdxPair {
    std::filesystem::path images;
    std::filesystem::path labels;
};

/// Writes `n` side x side images of `classes` noisy prototype patterns.
inline IdxPair write_synthetic_idx(const std::filesystem::path& dir, const std::string& stem, std::uint32_t n,
                                   std::uint32_t side, std::uint32_t classes, std::uint64_t seed)
{
    Rng rng(seed);
    const std::uint32_t dim = side * side;
    std::vector<std::vector<unsigned char>> proto(classes, std::vector<unsigned char>(dim));
    Rng proto_rng(1234);
    for (auto& p : proto)
        for (auto& v : p)
            v = static_cast<unsigned char>(proto_rng.below(256));
    std::vector<unsigned char> pixels, labels;
    for (std::uint32_t i = 0; i < n; ++i) {
        const auto c = static_cast<std::uint32_t>(rng.below(classes));
        labels.push_back(static_cast<unsigned char>(c));
        for (std::uint32_t j = 0; j < dim; ++j) {
            const double noisy = proto[c][j] + rng.uniform(-110.0, 110.0);
            pixels.push_back(static_cast<unsigned char>(noisy < 0 ? 0 : noisy > 255 ? 255 : noisy));
        }
    }
    IdxPair out{dir / (stem + "-images-idx3-ubyte"), dir / (stem + "-labels-idx1-ubyte")};
    write_file(out.images, idx_images(n, side, side, pixels));
    write_file(out.labels, idx_labels(labels));
    return out;
}

/// Features uniform in [0, 1), labels uniform over the classes.
inline Dataset random_dataset(std::size_t n, std::size_t dim, std::size_t classes, std::uint64_t seed)
{
    Rng rng(seed);
    Dataset d(dim, classes, "random");
    std::vector<double> x(dim);
    for (std::size_t i = 0; i < n; ++i) {
        for (auto& v : x)
            v = rng.uniform();
        d.add(x, static_cast<std::uint32_t>(rng.below(classes)));
    }
    return d;
}

struct MnistFiles {
    std::filesystem::path train_images, train_labels, test_images, test_labels;
};

/// MNIST location from CNNG_MNIST_DIR (environment first, then the build
/// configuration). Empty when the files are not all present.
inline std::optional<MnistFiles> mnist_files()
{
    std::string dir;
    if (const char* env = std::getenv("CNNG_MNIST_DIR"); env && *env)
        dir = env;
#ifdef CNNG_TEST_MNIST_DIR
    if (dir.empty())
        dir = CNNG_TEST_MNIST_DIR;
#endif
    if (dir.empty())
        return std::nullopt;
    const std::filesystem::path d(dir);
    MnistFiles f{d / "train-images-idx3-ubyte", d / "train-labels-idx1-ubyte", d / "t10k-images-idx3-ubyte",
                 d / "t10k-labels-idx1-ubyte"};
    for (const auto* p : {&f.train_images, &f.train_labels, &f.test_images, &f.test_labels})
        if (!std::filesystem::is_regular_file(*p))
            return std::nullopt;
    return f;
}

} // namespace cnng::fixtures
