#pragma once

#include <span>
#include <string>
#include <vector>

namespace ptr {

enum class SampleFormat { kFloat32, kPcm16 };

struct WavData {
  std::vector<double> samples;  // mono
  double sample_rate = 16000.0;
};

/// Writes a mono RIFF/WAVE file.
void write_wav(const std::string& path, std::span<const double> samples, double sample_rate,
               SampleFormat format = SampleFormat::kFloat32);
std::vector<unsigned char> encode_wav(std::span<const double> samples, double sample_rate,
                                      SampleFormat format);

/// Reads PCM16/PCM24/PCM32/float32 WAV; multi-channel input is averaged to mono.
WavData read_wav(const std::string& path);

/// Linear-interpolation resampling.
std::vector<double> resample_linear(std::span<const double> in, double from_rate, double to_rate);

}  // namespace ptr
