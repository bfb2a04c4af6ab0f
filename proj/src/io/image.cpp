#include "rdcl/io/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <random>

namespace rdcl::io {

namespace fs = std::filesystem;

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

fs::path temp_sibling(const fs::path& path) {
    static thread_local std::mt19937_64 gen{std::random_device{}()};
    return path.parent_path() / (path.filename().string() + ".tmp" + std::to_string(gen() % 1000000007ULL));
}

std::string lower_ext(const fs::path& p) {
    std::string e = p.extension().string();
    std::transform(e.begin(), e.end(), e.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return e;
}

Tensor read_png(const fs::path& path) {
    png_image img{};
    img.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&img, path.string().c_str()))
        throw DataError("cannot read PNG " + path.string() + ": " + img.message);
    img.format = PNG_FORMAT_RGB;
    std::vector<png_byte> buf(PNG_IMAGE_SIZE(img));
    if (!png_image_finish_read(&img, nullptr, buf.data(), 0, nullptr)) {
        png_image_free(&img);
        throw DataError("cannot decode PNG " + path.string() + ": " + img.message);
    }
    const int h = static_cast<int>(img.height), w = static_cast<int>(img.width);
    Tensor t(3, h, w);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c)
                t.at(c, y, x) = static_cast<float>(buf[(static_cast<std::size_t>(y) * w + x) * 3 + c]) / 255.0f;
    return t;
}

// Next whitespace-delimited PPM header token, skipping comments.
std::string ppm_token(std::istream& in) {
    std::string tok;
    char ch;
    while (in.get(ch)) {
        if (ch == '#') {
            std::string skip;
            std::getline(in, skip);
            continue;
        }
        if (std::isspace(static_cast<unsigned char>(ch))) {
            if (!tok.empty()) return tok;
            continue;
        }
        tok.push_back(ch);
    }
    return tok;
}

Tensor read_ppm(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    if (ppm_token(in) != "P6") throw DataError(path.string() + ": only binary PPM (P6) is supported");
    int w = 0, h = 0, maxval = 0;
    try {
        w = std::stoi(ppm_token(in));
        h = std::stoi(ppm_token(in));
        maxval = std::stoi(ppm_token(in));
    } catch (const std::exception&) {
        throw DataError(path.string() + ": malformed PPM header");
    }
    if (w <= 0 || h <= 0 || maxval <= 0 || maxval > 255) throw DataError(path.string() + ": unsupported PPM geometry");
    std::vector<unsigned char> buf(static_cast<std::size_t>(w) * h * 3);
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (in.gcount() != static_cast<std::streamsize>(buf.size())) throw DataError(path.string() + ": truncated PPM data");
    Tensor t(3, h, w);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c)
                t.at(c, y, x) = static_cast<float>(buf[(static_cast<std::size_t>(y) * w + x) * 3 + c]) / static_cast<float>(maxval);
    return t;
}

void write_png_bytes(const fs::path& path, const std::vector<png_byte>& pixels, int width, int height, bool gray) {
    const fs::path tmp = temp_sibling(path);
    png_image img{};
    img.version = PNG_IMAGE_VERSION;
    img.width = static_cast<png_uint_32>(width);
    img.height = static_cast<png_uint_32>(height);
    img.format = gray ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
    if (!png_image_write_to_file(&img, tmp.string().c_str(), 0, pixels.data(), 0, nullptr)) {
        std::error_code ec;
        fs::remove(tmp, ec);
        throw DataError("cannot write PNG " + path.string() + ": " + img.message);
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) {
        fs::remove(tmp, ec);
        throw DataError("cannot write " + path.string());
    }
}

}  // namespace

std::uint8_t to_byte(float v) {
    const float c = std::clamp(v, 0.0f, 1.0f);
    return static_cast<std::uint8_t>(std::lround(c * 255.0f));
}

Tensor read_image(const fs::path& path) {
    if (!fs::is_regular_file(path)) throw DataError("no such image: " + path.string());
    const std::string ext = lower_ext(path);
    if (ext == ".png") return read_png(path);
    if (ext == ".ppm") return read_ppm(path);
    throw DataError("unsupported image format: " + path.string());
}

void write_png(const fs::path& path, const Tensor& image) {
    if (image.channels() != 3) throw ContractError("write_png: expected 3 channels");
    const int h = image.height(), w = image.width();
    std::vector<png_byte> px(static_cast<std::size_t>(h) * w * 3);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c) px[(static_cast<std::size_t>(y) * w + x) * 3 + c] = to_byte(image.at(c, y, x));
    write_png_bytes(path, px, w, h, false);
}

void write_gray_png(const fs::path& path, const Tensor& gray) {
    if (gray.channels() != 1) throw ContractError("write_gray_png: expected 1 channel");
    std::vector<png_byte> px(gray.size());
    for (std::size_t i = 0; i < gray.size(); ++i) px[i] = to_byte(gray[i]);
    write_png_bytes(path, px, gray.width(), gray.height(), true);
}

void write_file_atomic(const fs::path& path, const std::vector<std::uint8_t>& bytes) {
    const fs::path tmp = temp_sibling(path);
    {
        FilePtr f(std::fopen(tmp.string().c_str(), "wb"));
        if (!f) throw DataError("cannot write " + path.string());
        if (!bytes.empty() && std::fwrite(bytes.data(), 1, bytes.size(), f.get()) != bytes.size()) {
            f.reset();
            std::error_code ec;
            fs::remove(tmp, ec);
            throw DataError("short write to " + path.string());
        }
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) {
        fs::remove(tmp, ec);
        throw DataError("cannot write " + path.string());
    }
}

std::vector<std::uint8_t> read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::vector<fs::path> list_images(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw DataError("not a directory: " + dir.string());
    std::vector<fs::path> out;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (!e.is_regular_file()) continue;
        const std::string ext = lower_ext(e.path());
        if (ext == ".png" || ext == ".ppm") out.push_back(e.path());
    }
    std::sort(out.begin(), out.end());
    return out;
}

Tensor pad_replicate(const Tensor& image, int align) {
    if (align < 1) throw ContractError("pad_replicate: alignment must be positive");
    const int h = image.height(), w = image.width();
    const int ph = (h + align - 1) / align * align, pw = (w + align - 1) / align * align;
    if (ph == h && pw == w) return image;
    Tensor out(image.channels(), ph, pw);
    for (int c = 0; c < image.channels(); ++c)
        for (int y = 0; y < ph; ++y)
            for (int x = 0; x < pw; ++x) out.at(c, y, x) = image.at(c, std::min(y, h - 1), std::min(x, w - 1));
    return out;
}

Tensor crop_at(const Tensor& image, int top, int left, int height, int width) {
    if (top < 0 || left < 0 || height < 0 || width < 0 || top + height > image.height() || left + width > image.width())
        throw ContractError("crop: window outside the image");
    Tensor out(image.channels(), height, width);
    for (int c = 0; c < image.channels(); ++c)
        for (int y = 0; y < height; ++y)
            std::copy_n(image.channel(c) + static_cast<std::size_t>(top + y) * image.width() + left, width,
                        out.channel(c) + static_cast<std::size_t>(y) * width);
    return out;
}

Tensor crop(const Tensor& image, int height, int width) { return crop_at(image, 0, 0, height, width); }

}  // namespace rdcl::io
