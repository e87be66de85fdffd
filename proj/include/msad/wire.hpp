#pragma once

// HTTP/JSON client for the model server. Tensors travel as
//   {"shape": [...], "dtype": "float32", "data": base64(little-endian float32, row-major)}
// and masks as row-major run lengths {"size": [h, w], "counts": [zeros, ones, zeros, ...]}.
//
//   GET  /healthz
//   GET  /v1/descriptor        -> ProviderDescriptor
//   POST /v1/embed_window      {image, window} -> {embedding}   |  {image, windows} -> {embeddings}
//   POST /v1/embed_image       {image} -> {class_token, patch_tokens [rows, cols, dim]}
//   POST /v1/embed_text        {templates} -> {embeddings [n, dim]}
//   POST /v1/segment           {image} -> {masks}

#include <bit>
#include <chrono>
#include <cstdint>
#include <cstring>
#include <memory>
#include <string>
#include <thread>
#include <vector>

#include <openssl/evp.h>

#include "httplib.h"
#include "json.hpp"

#include "msad/providers.hpp"

namespace msad::wire {

using nlohmann::json;

inline std::string base64_encode(const std::uint8_t* p, std::size_t n) {
    std::string out(4 * ((n + 2) / 3), '\0');
    const int len = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), p, static_cast<int>(n));
    out.resize(static_cast<std::size_t>(len));
    return out;
}

inline std::vector<std::uint8_t> base64_decode(const std::string& s) {
    if (s.size() % 4 != 0) throw ContractViolation("malformed base64 payload");
    std::vector<std::uint8_t> out(s.size() / 4 * 3);
    const int len = EVP_DecodeBlock(out.data(), reinterpret_cast<const unsigned char*>(s.data()), static_cast<int>(s.size()));
    if (len < 0) throw ContractViolation("malformed base64 payload");
    std::size_t pad = 0;
    if (!s.empty() && s.back() == '=') ++pad;
    if (s.size() > 1 && s[s.size() - 2] == '=') ++pad;
    out.resize(static_cast<std::size_t>(len) - pad);
    return out;
}

struct Tensor {
    std::vector<std::int64_t> shape;
    std::vector<float> data;

    std::size_t numel() const {
        std::size_t n = 1;
        for (auto s : shape) n *= static_cast<std::size_t>(s);
        return n;
    }
};

inline json encode_tensor(std::span<const float> data, std::vector<std::int64_t> shape) {
    std::vector<std::uint8_t> bytes(data.size() * 4);
    for (std::size_t i = 0; i < data.size(); ++i) {
        const auto u = std::bit_cast<std::uint32_t>(data[i]);
        for (int b = 0; b < 4; ++b) bytes[i * 4 + b] = static_cast<std::uint8_t>(u >> (8 * b));
    }
    return {{"shape", std::move(shape)}, {"dtype", "float32"}, {"data", base64_encode(bytes.data(), bytes.size())}};
}

inline Tensor decode_tensor(const json& j) {
    try {
        if (j.at("dtype").get<std::string>() != "float32") throw ContractViolation("tensor dtype must be float32");
        Tensor t;
        t.shape = j.at("shape").get<std::vector<std::int64_t>>();
        for (auto s : t.shape)
            if (s < 0) throw ContractViolation("negative tensor dimension");
        const auto bytes = base64_decode(j.at("data").get<std::string>());
        if (bytes.size() != t.numel() * 4) throw ContractViolation("tensor payload size does not match its shape");
        t.data.resize(t.numel());
        for (std::size_t i = 0; i < t.data.size(); ++i) {
            std::uint32_t u = 0;
            for (int b = 0; b < 4; ++b) u |= static_cast<std::uint32_t>(bytes[i * 4 + b]) << (8 * b);
            t.data[i] = std::bit_cast<float>(u);
        }
        return t;
    } catch (const json::exception& e) {
        throw ContractViolation(std::string("malformed tensor: ") + e.what());
    }
}

inline json encode_image(const ImageTensor& img) { return encode_tensor(img.data, {img.height, img.width, 3}); }

inline ImageTensor decode_image(const json& j) {
    auto t = decode_tensor(j);
    if (t.shape.size() != 3 || t.shape[2] != 3) throw ContractViolation("image tensor must have shape [H, W, 3]");
    ImageTensor img(static_cast<int>(t.shape[0]), static_cast<int>(t.shape[1]));
    img.data = std::move(t.data);
    return img;
}

inline json encode_window(const WindowSpec& w) {
    return {{"row0", w.row0}, {"col0", w.col0}, {"rows", w.rows}, {"cols", w.cols}};
}

inline WindowSpec decode_window(const json& j) {
    WindowSpec w;
    w.row0 = j.at("row0").get<int>();
    w.col0 = j.at("col0").get<int>();
    w.rows = j.at("rows").get<int>();
    w.cols = j.at("cols").get<int>();
    const int side = std::max(w.rows, w.cols);
    w.scale = side <= 2 ? Scale::small : side == 3 ? Scale::middle : Scale::image;
    return w;
}

inline json encode_mask(const BinaryMask& m) {
    std::vector<std::uint64_t> counts;
    std::uint8_t cur = 0;
    std::uint64_t run = 0;
    for (auto v : m.data) {
        const std::uint8_t b = v != 0;
        if (b != cur) {
            counts.push_back(run);
            run = 0;
            cur = b;
        }
        ++run;
    }
    counts.push_back(run);
    return {{"size", {m.height, m.width}}, {"counts", counts}};
}

inline BinaryMask decode_mask(const json& j) {
    try {
        const auto size = j.at("size").get<std::vector<int>>();
        if (size.size() != 2 || size[0] < 0 || size[1] < 0) throw ContractViolation("mask size must be [h, w]");
        BinaryMask m(size[0], size[1]);
        std::size_t pos = 0;
        std::uint8_t cur = 0;
        for (const auto& c : j.at("counts")) {
            const auto n = c.get<std::uint64_t>();
            if (n > m.data.size() - pos) throw ContractViolation("mask run lengths exceed mask size");
            std::fill_n(m.data.begin() + static_cast<std::ptrdiff_t>(pos), n, cur);
            pos += n;
            cur ^= 1;
        }
        if (pos != m.data.size()) throw ContractViolation("mask run lengths do not cover the mask");
        return m;
    } catch (const json::exception& e) {
        throw ContractViolation(std::string("malformed mask: ") + e.what());
    }
}

struct ClientOptions {
    std::chrono::milliseconds connect_timeout{2000};
    std::chrono::milliseconds read_timeout{60000};
    int max_attempts = 3;
    std::chrono::milliseconds backoff{200};
};

/// Blocking JSON client. A fresh connection per call keeps it safe to share across threads.
class Client {
public:
    explicit Client(std::string endpoint, ClientOptions opt = {}) : endpoint_(std::move(endpoint)), opt_(opt) {
        if (endpoint_.find("://") == std::string::npos) endpoint_ = "http://" + endpoint_;
        if (opt_.max_attempts < 1) throw InvalidConfig("max_attempts must be >= 1");
    }

    const std::string& endpoint() const noexcept { return endpoint_; }

    json get(const std::string& path) const { return call(path, nullptr); }
    json post(const std::string& path, const json& body) const { return call(path, &body); }

    bool healthy() const {
        try {
            auto cli = connect();
            auto res = cli.Get("/healthz");
            return res && res->status == 200;
        } catch (const std::exception&) {
            return false;
        }
    }

private:
    httplib::Client connect() const {
        httplib::Client cli(endpoint_);
        cli.set_connection_timeout(opt_.connect_timeout);
        cli.set_read_timeout(opt_.read_timeout);
        cli.set_write_timeout(opt_.read_timeout);
        return cli;
    }

    json call(const std::string& path, const json* body) const {
        const std::string payload = body ? body->dump() : std::string{};
        std::string last = "no attempt made";
        int status = 0;
        int retry_ms = static_cast<int>(opt_.backoff.count());
        for (int attempt = 1; attempt <= opt_.max_attempts; ++attempt) {
            auto cli = connect();
            auto res = body ? cli.Post(path, payload, "application/json") : cli.Get(path);
            if (!res) {
                status = 0;
                last = endpoint_ + path + ": " + httplib::to_string(res.error());
            } else if (res->status == 200) {
                try {
                    return json::parse(res->body);
                } catch (const json::exception& e) {
                    throw ContractViolation(path + ": response is not JSON: " + e.what());
                }
            } else {
                status = res->status;
                last = endpoint_ + path + ": HTTP " + std::to_string(status) + " " + res->body;
                if (status == 400) throw ContractViolation(last);
                const bool retryable = status == 429 || status >= 500;
                if (!retryable) throw TransportError(last, status, attempt, -1);
                if (res->has_header("Retry-After")) {
                    try {
                        retry_ms = static_cast<int>(std::stod(res->get_header_value("Retry-After")) * 1000.0);
                    } catch (const std::exception&) {
                    }
                }
            }
            if (attempt < opt_.max_attempts) {
                std::this_thread::sleep_for(std::chrono::milliseconds(retry_ms));
                retry_ms *= 2;
            }
        }
        throw TransportError(last, status, opt_.max_attempts, retry_ms);
    }

    std::string endpoint_;
    ClientOptions opt_;
};

inline std::vector<std::vector<float>> split_rows(const Tensor& t, std::size_t rows, const char* what) {
    if (t.shape.empty() || t.numel() == 0 || t.numel() % rows != 0)
        throw ContractViolation(std::string(what) + ": unexpected tensor shape");
    const std::size_t d = t.numel() / rows;
    std::vector<std::vector<float>> out(rows);
    for (std::size_t i = 0; i < rows; ++i) out[i].assign(t.data.begin() + i * d, t.data.begin() + (i + 1) * d);
    return out;
}

class RemoteImageEncoder final : public ImageEncoder {
public:
    explicit RemoteImageEncoder(std::shared_ptr<const Client> client) : client_(std::move(client)) {
        desc_ = client_->get("/v1/descriptor").get<ProviderDescriptor>();
        validate(desc_);
    }
    ProviderDescriptor descriptor() const override { return desc_; }

protected:
    std::vector<std::vector<float>> do_embed_windows(const ImageTensor& img,
                                                     std::span<const WindowSpec> ws) const override {
        json windows = json::array();
        for (const auto& w : ws) windows.push_back(encode_window(w));
        const auto res = client_->post("/v1/embed_window", {{"image", encode_image(img)}, {"windows", windows}});
        return split_rows(decode_tensor(res.at("embeddings")), ws.size(), "embed_window");
    }

    RawImageEmbeddings do_embed_image(const ImageTensor& img) const override {
        const auto res = client_->post("/v1/embed_image", {{"image", encode_image(img)}});
        RawImageEmbeddings r;
        r.class_token = decode_tensor(res.at("class_token")).data;
        const auto pt = decode_tensor(res.at("patch_tokens"));
        if (pt.shape.size() != 3) throw ContractViolation("embed_image: patch_tokens must be [rows, cols, dim]");
        r.rows = static_cast<int>(pt.shape[0]);
        r.cols = static_cast<int>(pt.shape[1]);
        r.patch_tokens = split_rows(pt, static_cast<std::size_t>(r.rows) * r.cols, "embed_image");
        return r;
    }

private:
    std::shared_ptr<const Client> client_;
    ProviderDescriptor desc_;
};

class RemoteTextEncoder final : public TextEncoder {
public:
    RemoteTextEncoder(std::shared_ptr<const Client> client, ProviderDescriptor desc)
        : client_(std::move(client)), desc_(std::move(desc)) {}
    ProviderDescriptor descriptor() const override { return desc_; }

protected:
    std::vector<std::vector<float>> do_encode(std::span<const std::string> prompts) const override {
        const auto res = client_->post("/v1/embed_text", {{"templates", std::vector<std::string>(prompts.begin(), prompts.end())}});
        return split_rows(decode_tensor(res.at("embeddings")), prompts.size(), "embed_text");
    }

private:
    std::shared_ptr<const Client> client_;
    ProviderDescriptor desc_;
};

class RemoteSegmenter final : public Segmenter {
public:
    explicit RemoteSegmenter(std::shared_ptr<const Client> client) : client_(std::move(client)) {}

protected:
    std::vector<BinaryMask> do_segment(const ImageTensor& img) const override {
        const auto res = client_->post("/v1/segment", {{"image", encode_image(img)}});
        std::vector<BinaryMask> out;
        for (const auto& m : res.at("masks")) out.push_back(decode_mask(m));
        return out;
    }

private:
    std::shared_ptr<const Client> client_;
};

/// All three providers backed by one model server.
inline Providers make_remote_providers(const std::string& endpoint, ClientOptions opt = {}) {
    auto client = std::make_shared<const Client>(endpoint, opt);
    auto image = std::make_shared<RemoteImageEncoder>(client);
    auto desc = image->descriptor();
    return {std::move(image), std::make_shared<RemoteTextEncoder>(client, std::move(desc)),
            std::make_shared<RemoteSegmenter>(client)};
}

}  // namespace msad::wire
