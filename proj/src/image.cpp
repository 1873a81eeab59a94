#include "sodkit/image.hpp"

#include <fstream>

namespace sodkit {

namespace {

int read_pnm_token(std::istream& in) {
    // skips whitespace and '#' comments
    while (true) {
        int c = in.peek();
        if (c == '#') {
            std::string line;
            std::getline(in, line);
        } else if (std::isspace(c)) {
            in.get();
        } else {
            break;
        }
    }
    int value = -1;
    in >> value;
    return value;
}

}  // namespace

Image read_pnm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open image: " + path.string());
    std::string magic(2, '\0');
    in.read(magic.data(), 2);
    int channels;
    if (magic == "P5")
        channels = 1;
    else if (magic == "P6")
        channels = 3;
    else
        throw IoError("unsupported image format (need binary PGM/PPM): " + path.string());
    const int w = read_pnm_token(in);
    const int h = read_pnm_token(in);
    const int maxval = read_pnm_token(in);
    if (w <= 0 || h <= 0 || maxval != 255)
        throw IoError("bad PNM header (8-bit only): " + path.string());
    in.get();  // single whitespace after maxval
    std::vector<unsigned char> raw(static_cast<size_t>(w) * h * channels);
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (!in) throw IoError("truncated image data: " + path.string());
    Image img{w, h, channels, std::vector<double>(raw.size())};
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < channels; ++c)
                img.at(c, y, x) = raw[(static_cast<size_t>(y) * w + x) * channels + c] / 255.0;
    return img;
}

namespace {

void write_pnm(const std::filesystem::path& path, const Image& img, int channels,
               const char* magic) {
    if (img.channels != channels)
        throw IoError("image channel count does not match format for " + path.string());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write image: " + path.string());
    out << magic << "\n" << img.width << " " << img.height << "\n255\n";
    std::vector<unsigned char> raw(static_cast<size_t>(img.width) * img.height * channels);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < channels; ++c)
                raw[(static_cast<size_t>(y) * img.width + x) * channels + c] =
                    static_cast<unsigned char>(quantize8(img.at(c, y, x)));
    out.write(reinterpret_cast<const char*>(raw.data()),
              static_cast<std::streamsize>(raw.size()));
}

}  // namespace

void write_pgm(const std::filesystem::path& path, const Image& img) {
    write_pnm(path, img, 1, "P5");
}

void write_ppm(const std::filesystem::path& path, const Image& img) {
    write_pnm(path, img, 3, "P6");
}

Image resize_bilinear(const Image& img, int out_w, int out_h) {
    Image out{out_w, out_h, img.channels,
              std::vector<double>(static_cast<size_t>(img.channels) * out_w * out_h)};
    const double sy = static_cast<double>(img.height) / out_h;
    const double sx = static_cast<double>(img.width) / out_w;
    for (int c = 0; c < img.channels; ++c)
        for (int oy = 0; oy < out_h; ++oy) {
            double fy = std::clamp((oy + 0.5) * sy - 0.5, 0.0, img.height - 1.0);
            const int y0 = static_cast<int>(fy);
            const int y1 = std::min(y0 + 1, img.height - 1);
            const double wy = fy - y0;
            for (int ox = 0; ox < out_w; ++ox) {
                double fx = std::clamp((ox + 0.5) * sx - 0.5, 0.0, img.width - 1.0);
                const int x0 = static_cast<int>(fx);
                const int x1 = std::min(x0 + 1, img.width - 1);
                const double wx = fx - x0;
                out.at(c, oy, ox) =
                    (1 - wy) * ((1 - wx) * img.at(c, y0, x0) + wx * img.at(c, y0, x1)) +
                    wy * ((1 - wx) * img.at(c, y1, x0) + wx * img.at(c, y1, x1));
            }
        }
    return out;
}

}  // namespace sodkit
