#include "ptr/wav.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>

#include "ptr/error.hpp"

namespace ptr {

namespace {

void put_u16(std::vector<unsigned char>& b, std::uint16_t v) {
  b.push_back(static_cast<unsigned char>(v & 0xff));
  b.push_back(static_cast<unsigned char>(v >> 8));
}

void put_u32(std::vector<unsigned char>& b, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) b.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xff));
}

void put_tag(std::vector<unsigned char>& b, const char* tag) { b.insert(b.end(), tag, tag + 4); }

std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::uint16_t get_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

}  // namespace

std::vector<unsigned char> encode_wav(std::span<const double> samples, double sample_rate,
                                      SampleFormat format) {
  require(sample_rate > 0 && sample_rate < 4.0e9, ErrorKind::kInvalidInput, "invalid WAV sample rate");
  const bool pcm = format == SampleFormat::kPcm16;
  const std::uint16_t bits = pcm ? 16 : 32;
  const std::uint16_t bytes = bits / 8;
  const std::uint32_t rate = static_cast<std::uint32_t>(std::llround(sample_rate));
  const std::uint64_t data_size = samples.size() * bytes;
  require(data_size < 0xffffffffULL - 64, ErrorKind::kInvalidInput, "audio too long for WAV");
  std::vector<unsigned char> b;
  b.reserve(static_cast<std::size_t>(data_size) + 64);
  put_tag(b, "RIFF");
  put_u32(b, static_cast<std::uint32_t>(36 + data_size));
  put_tag(b, "WAVE");
  put_tag(b, "fmt ");
  put_u32(b, 16);
  put_u16(b, pcm ? 1 : 3);
  put_u16(b, 1);
  put_u32(b, rate);
  put_u32(b, rate * bytes);
  put_u16(b, bytes);
  put_u16(b, bits);
  put_tag(b, "data");
  put_u32(b, static_cast<std::uint32_t>(data_size));
  for (double s : samples) {
    if (pcm) {
      const double c = std::clamp(s, -1.0, 1.0);
      put_u16(b, static_cast<std::uint16_t>(static_cast<std::int16_t>(std::lrint(c * 32767.0))));
    } else {
      const float f = static_cast<float>(s);
      std::uint32_t bitsv;
      std::memcpy(&bitsv, &f, 4);
      put_u32(b, bitsv);
    }
  }
  return b;
}

void write_wav(const std::string& path, std::span<const double> samples, double sample_rate,
               SampleFormat format) {
  const auto bytes = encode_wav(samples, sample_rate, format);
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), ErrorKind::kInvalidInput, "cannot write WAV file: " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  require(static_cast<bool>(out), ErrorKind::kInvalidInput, "failed writing WAV file: " + path);
}

WavData read_wav(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorKind::kInvalidInput, "cannot open WAV file: " + path);
  const std::vector<unsigned char> b((std::istreambuf_iterator<char>(in)),
                                     std::istreambuf_iterator<char>());
  require(b.size() >= 12 && std::memcmp(b.data(), "RIFF", 4) == 0 &&
              std::memcmp(b.data() + 8, "WAVE", 4) == 0,
          ErrorKind::kInvalidInput, path + ": not a RIFF/WAVE file");
  std::uint16_t fmt = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  const unsigned char* data = nullptr;
  std::size_t data_len = 0;
  std::size_t pos = 12;
  while (pos + 8 <= b.size()) {
    const unsigned char* chunk = b.data() + pos;
    const std::size_t len = get_u32(chunk + 4);
    const std::size_t body = pos + 8;
    const std::size_t avail = std::min(len, b.size() - body);
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      require(avail >= 16, ErrorKind::kInvalidInput, path + ": truncated fmt chunk");
      fmt = get_u16(b.data() + body);
      channels = get_u16(b.data() + body + 2);
      rate = get_u32(b.data() + body + 4);
      bits = get_u16(b.data() + body + 14);
      if (fmt == 0xfffe && avail >= 26) fmt = get_u16(b.data() + body + 24);
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      data = b.data() + body;
      data_len = avail;
    }
    pos = body + len + (len & 1);
  }
  require(channels > 0 && rate > 0, ErrorKind::kInvalidInput, path + ": missing fmt chunk");
  require(data != nullptr, ErrorKind::kInvalidInput, path + ": missing data chunk");
  const bool is_float = fmt == 3 && bits == 32;
  const bool is_pcm = fmt == 1 && (bits == 16 || bits == 24 || bits == 32);
  require(is_float || is_pcm, ErrorKind::kInvalidInput,
          path + ": unsupported sample format (format " + std::to_string(fmt) + ", " +
              std::to_string(bits) + " bits)");
  const std::size_t width = bits / 8;
  const std::size_t frames = data_len / (width * channels);
  WavData out;
  out.sample_rate = rate;
  out.samples.assign(frames, 0.0);
  for (std::size_t f = 0; f < frames; ++f) {
    double acc = 0.0;
    for (std::size_t c = 0; c < channels; ++c) {
      const unsigned char* p = data + (f * channels + c) * width;
      double v;
      if (is_float) {
        float x;
        std::memcpy(&x, p, 4);
        v = x;
      } else if (bits == 16) {
        v = static_cast<std::int16_t>(get_u16(p)) / 32768.0;
      } else if (bits == 24) {
        std::int32_t x = static_cast<std::int32_t>(p[0] | (p[1] << 8) | (p[2] << 16));
        if (x & 0x800000) x -= 0x1000000;
        v = x / 8388608.0;
      } else {
        v = static_cast<std::int32_t>(get_u32(p)) / 2147483648.0;
      }
      acc += v;
    }
    out.samples[f] = acc / channels;
  }
  return out;
}

std::vector<double> resample_linear(std::span<const double> in, double from_rate, double to_rate) {
  require(from_rate > 0 && to_rate > 0, ErrorKind::kInvalidInput, "resample rates must be positive");
  if (in.empty()) return {};
  if (from_rate == to_rate) return {in.begin(), in.end()};
  const double duration = static_cast<double>(in.size() - 1) / from_rate;
  const std::size_t n = static_cast<std::size_t>(std::llround(duration * to_rate)) + 1;
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double x = static_cast<double>(i) * from_rate / to_rate;
    const std::size_t k = std::min(static_cast<std::size_t>(x), in.size() - 1);
    const double frac = x - static_cast<double>(k);
    out[i] = k + 1 < in.size() ? in[k] + (in[k + 1] - in[k]) * frac : in[k];
  }
  return out;
}

}  // namespace ptr
