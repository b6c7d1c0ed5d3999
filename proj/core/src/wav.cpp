#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <vector>

#include "av/common.hpp"
#include "av/signal.hpp"

namespace av::signal {

namespace {

void put_u32(std::vector<char>& b, uint32_t v) {
  b.insert(b.end(), reinterpret_cast<const char*>(&v), reinterpret_cast<const char*>(&v) + 4);
}
void put_u16(std::vector<char>& b, uint16_t v) {
  b.insert(b.end(), reinterpret_cast<const char*>(&v), reinterpret_cast<const char*>(&v) + 2);
}
void put_tag(std::vector<char>& b, const char* tag) { b.insert(b.end(), tag, tag + 4); }

uint32_t get_u32(const char* p) {
  uint32_t v;
  std::memcpy(&v, p, 4);
  return v;
}
uint16_t get_u16(const char* p) {
  uint16_t v;
  std::memcpy(&v, p, 2);
  return v;
}

}  // namespace

void write_wav(const std::filesystem::path& path, const Waveform& w, WavEncoding enc) {
  validate(w);
  const int channels = w.channels();
  const int64_t n = w.length();
  const uint16_t bytes_per_sample = enc == WavEncoding::pcm16 ? 2 : 4;
  const uint16_t format = enc == WavEncoding::pcm16 ? 1 : 3;  // PCM / IEEE float
  const uint32_t data_bytes = static_cast<uint32_t>(n * channels * bytes_per_sample);

  std::vector<char> buf;
  buf.reserve(44 + data_bytes);
  put_tag(buf, "RIFF");
  put_u32(buf, 36 + data_bytes);
  put_tag(buf, "WAVE");
  put_tag(buf, "fmt ");
  put_u32(buf, 16);
  put_u16(buf, format);
  put_u16(buf, static_cast<uint16_t>(channels));
  put_u32(buf, static_cast<uint32_t>(w.sample_rate));
  put_u32(buf, static_cast<uint32_t>(w.sample_rate) * channels * bytes_per_sample);
  put_u16(buf, static_cast<uint16_t>(channels * bytes_per_sample));
  put_u16(buf, static_cast<uint16_t>(bytes_per_sample * 8));
  put_tag(buf, "data");
  put_u32(buf, data_bytes);

  // Interleave channels.
  for (int64_t i = 0; i < n; ++i) {
    for (int c = 0; c < channels; ++c) {
      const double v = w.channel(c)[i];
      if (enc == WavEncoding::pcm16) {
        const double clamped = std::clamp(v, -1.0, 1.0);
        const int16_t q = static_cast<int16_t>(std::lround(clamped * 32767.0));
        buf.insert(buf.end(), reinterpret_cast<const char*>(&q),
                   reinterpret_cast<const char*>(&q) + 2);
      } else {
        const float f = static_cast<float>(v);
        buf.insert(buf.end(), reinterpret_cast<const char*>(&f),
                   reinterpret_cast<const char*>(&f) + 4);
      }
    }
  }

  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open wav file for writing: " + path.string());
  f.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!f) throw IoError("short write on wav file: " + path.string());
}

Waveform read_wav(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open wav file: " + path.string());
  std::vector<char> buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  if (buf.size() < 44 || std::memcmp(buf.data(), "RIFF", 4) != 0 ||
      std::memcmp(buf.data() + 8, "WAVE", 4) != 0)
    throw IoError("not a RIFF/WAVE file: " + path.string());

  uint16_t format = 0, channels = 0, bits = 0;
  uint32_t sample_rate = 0;
  const char* data = nullptr;
  uint32_t data_bytes = 0;

  size_t pos = 12;
  while (pos + 8 <= buf.size()) {
    const char* tag = buf.data() + pos;
    const uint32_t chunk = get_u32(buf.data() + pos + 4);
    const char* body = buf.data() + pos + 8;
    if (pos + 8 + chunk > buf.size()) break;
    if (std::memcmp(tag, "fmt ", 4) == 0 && chunk >= 16) {
      format = get_u16(body);
      channels = get_u16(body + 2);
      sample_rate = get_u32(body + 4);
      bits = get_u16(body + 14);
    } else if (std::memcmp(tag, "data", 4) == 0) {
      data = body;
      data_bytes = chunk;
    }
    pos += 8 + chunk + (chunk & 1);  // chunks are word-aligned
  }

  if (!data || channels == 0 || sample_rate == 0)
    throw IoError("missing fmt/data chunk in wav file: " + path.string());
  if (!((format == 1 && bits == 16) || (format == 3 && bits == 32)))
    throw IoError("unsupported wav encoding (expect PCM16 or float32): " + path.string());

  const int bytes_per_sample = bits / 8;
  const int64_t n = data_bytes / (channels * bytes_per_sample);
  Waveform w = Waveform::zeros(channels, n, static_cast<int>(sample_rate));
  for (int64_t i = 0; i < n; ++i) {
    for (int c = 0; c < channels; ++c) {
      const char* p = data + (i * channels + c) * bytes_per_sample;
      if (format == 1) {
        int16_t q;
        std::memcpy(&q, p, 2);
        w.channel(c)[i] = q / 32767.0;
      } else {
        float v;
        std::memcpy(&v, p, 4);
        w.channel(c)[i] = v;
      }
    }
  }
  return w;
}

}  // namespace av::signal
