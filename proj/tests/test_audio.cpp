#include <gtest/gtest.h>

#include <complex>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "fsed/audio/mel.hpp"
#include "fsed/audio/noise.hpp"
#include "fsed/audio/resample.hpp"
#include "fsed/audio/wav.hpp"
#include "support.hpp"

namespace fsed {
namespace {

std::vector<double> sine(double hz, int rate, std::size_t n, double amp = 0.5) {
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i) {
    x[i] = amp * std::sin(2.0 * std::numbers::pi * hz * static_cast<double>(i) / rate);
  }
  return x;
}

std::size_t dominant_bin(const std::vector<double>& x) {
  const std::size_t n = x.size();
  std::size_t best = 0;
  double best_p = -1.0;
  for (std::size_t k = 1; k < n / 2; ++k) {
    std::complex<double> acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      acc += x[i] * std::polar(1.0, -2.0 * std::numbers::pi * double(k * i) / double(n));
    }
    if (std::norm(acc) > best_p) {
      best_p = std::norm(acc);
      best = k;
    }
  }
  return best;
}

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("fsed_audio_" + name);
}

TEST(Wav, FloatRoundTrip) {
  const auto path = temp_path("rt.wav");
  const std::vector<double> x = {0.0, 0.25, -0.5, 0.999};
  audio::write_wav(path.string(), x, 22050);
  const audio::Waveform w = audio::read_wav(path.string());
  EXPECT_EQ(w.sample_rate, 22050);
  ASSERT_EQ(w.samples.size(), x.size());
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(w.samples[i], x[i], 1e-7);
}

TEST(Wav, Pcm16StereoIsAveragedToMono) {
  const auto path = temp_path("pcm16.wav");
  {
    std::ofstream out(path, std::ios::binary);
    auto u32 = [&](std::uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); };
    auto u16 = [&](std::uint16_t v) { out.write(reinterpret_cast<const char*>(&v), 2); };
    out.write("RIFF", 4);
    u32(36 + 8);
    out.write("WAVEfmt ", 8);
    u32(16);
    u16(1);
    u16(2);
    u32(8000);
    u32(8000 * 4);
    u16(4);
    u16(16);
    out.write("data", 4);
    u32(8);
    for (std::int16_t s : {std::int16_t(16384), std::int16_t(0), std::int16_t(-32768),
                           std::int16_t(-32768)}) {
      out.write(reinterpret_cast<const char*>(&s), 2);
    }
  }
  const audio::Waveform w = audio::read_wav(path.string());
  ASSERT_EQ(w.samples.size(), 2u);
  EXPECT_NEAR(w.samples[0], 0.25, 1e-9);
  EXPECT_NEAR(w.samples[1], -1.0, 1e-9);
}

TEST(Wav, RejectsNonRiff) {
  const auto path = temp_path("bad.wav");
  std::ofstream(path) << "not a wav file at all, sorry";
  EXPECT_THROW(audio::read_wav(path.string()), ParseError);
}

TEST(Resample, SameRateIsIdentity) {
  Rng rng(1);
  const Tensor t = test::random_tensor({100}, rng);
  const std::vector<double> x(t.data(), t.data() + t.size());
  EXPECT_EQ(audio::resample(x, 16000, 16000), x);
}

TEST(Resample, LengthFollowsRateRatio) {
  const std::vector<double> x(5 * 44100, 0.0);
  EXPECT_EQ(audio::resample(x, 44100, 16000).size(), 80000u);
  EXPECT_EQ(audio::resampled_length(3, 2, 1), 2u);  // 1.5 rounds up
  EXPECT_EQ(audio::resampled_length(1000, 16000, 44100), 2756u);
}

TEST(Resample, ConstantSignalKeepsAmplitude) {
  const std::vector<double> x(4410, 0.37);
  for (double v : audio::resample(x, 44100, 16000)) EXPECT_NEAR(v, 0.37, 1e-12);
  for (double v : audio::resample(x, 16000, 22050)) EXPECT_NEAR(v, 0.37, 1e-12);
}

TEST(Resample, RejectsNonPositiveRates) {
  const std::vector<double> x(10, 0.0);
  EXPECT_THROW(audio::resample(x, 0, 16000), std::invalid_argument);
  EXPECT_THROW(audio::resample(x, 16000, -1), std::invalid_argument);
}

TEST(Resample, RoundTripKeepsDominantBin) {
  for (double hz : {440.0, 1000.0, 3000.0, 7000.0}) {
    const std::vector<double> x = sine(hz, 44100, 2205);
    const auto down = audio::resample(x, 44100, 16000);
    const auto back = audio::resample(down, 16000, 44100);
    ASSERT_EQ(back.size(), x.size());
    EXPECT_EQ(dominant_bin(back), dominant_bin(x)) << hz << " Hz";
  }
}

MelConfig default_mel() { return MelConfig{}; }

TEST(LogMel, SilenceIsLogFloor) {
  const MelConfig cfg = default_mel();
  const std::vector<double> x(4000, 0.0);
  const SpectrogramTensor s = log_mel(x, cfg);
  for (std::size_t i = 0; i < s.values.size(); ++i) {
    EXPECT_DOUBLE_EQ(s.values[i], std::log(cfg.log_floor));
  }
}

TEST(LogMel, FrameCountForFiveSeconds) {
  const MelConfig cfg = default_mel();
  EXPECT_EQ(frame_count(80000, cfg), 157u);
  const std::vector<double> x(80000, 0.0);
  const SpectrogramTensor s = log_mel(x, cfg);
  EXPECT_EQ(s.n_mels(), 128u);
  EXPECT_EQ(s.n_frames(), 157u);
}

TEST(LogMel, MatchesDirectDftOracle) {
  MelConfig cfg;
  cfg.n_mels = 16;
  cfg.window_samples = 64;
  cfg.hop_samples = 16;
  Rng rng(3);
  const Tensor t = test::random_tensor({200}, rng);
  const std::vector<double> x(t.data(), t.data() + t.size());
  const LogMelExtractor ex(cfg);
  const SpectrogramTensor s = ex(x);
  const std::size_t n = 64, pad = 32, bins = n / 2 + 1;
  for (std::size_t frame : {0u, 3u, 7u, 12u}) {
    std::vector<double> power(bins);
    for (std::size_t k = 0; k < bins; ++k) {
      std::complex<double> acc = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const long src = static_cast<long>(frame * 16 + i) - static_cast<long>(pad);
        const double v = src >= 0 && src < 200 ? x[static_cast<std::size_t>(src)] : 0.0;
        const double win = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * double(i) / double(n));
        acc += v * win * std::polar(1.0, -2.0 * std::numbers::pi * double(k * i) / double(n));
      }
      power[k] = std::norm(acc);
    }
    for (std::size_t m = 0; m < 16; ++m) {
      double e = 0.0;
      for (std::size_t k = 0; k < bins; ++k) e += ex.filterbank().at(m, k) * power[k];
      EXPECT_NEAR(s.values.at(m, frame), std::log(e + cfg.log_floor), 1e-9);
    }
  }
}

TEST(LogMel, SineAtBandCenterPeaksInThatBand) {
  const MelConfig cfg = default_mel();
  const auto centers = mel_band_centers(cfg);
  for (std::size_t band : {40u, 64u, 100u, 120u}) {
    const SpectrogramTensor s = log_mel(sine(centers[band], 16000, 16000), cfg);
    for (std::size_t t = 2; t + 2 < s.n_frames(); t += 5) {
      std::size_t best = 0;
      for (std::size_t m = 1; m < s.n_mels(); ++m) {
        if (s.values.at(m, t) > s.values.at(best, t)) best = m;
      }
      EXPECT_EQ(best, band) << "frame " << t;
    }
  }
}

TEST(LogMel, FilterbankNonNegativeAndSlaneyScale) {
  MelConfig cfg;
  cfg.n_mels = 32;
  const Tensor fb = mel_filterbank(cfg);
  for (std::size_t m = 0; m < 32; ++m) {
    for (std::size_t k = 0; k < fb.dim(1); ++k) EXPECT_GE(fb.at(m, k), 0.0);
  }
  EXPECT_NEAR(mel_to_hz(hz_to_mel(1234.5)), 1234.5, 1e-9);
  EXPECT_NEAR(hz_to_mel(1000.0), 15.0, 1e-12);
}

TEST(LogMel, DeterministicBitwise) {
  Rng rng(4);
  const Tensor t = test::random_tensor({5000}, rng);
  const std::vector<double> x(t.data(), t.data() + t.size());
  EXPECT_EQ(log_mel(x, default_mel()).values, log_mel(x, default_mel()).values);
}

TEST(LogMel, RejectsShortWaveform) {
  const std::vector<double> x(100, 0.0);
  EXPECT_THROW(log_mel(x, default_mel()), std::invalid_argument);
}

TEST(LogMel, ConfigValidation) {
  MelConfig cfg;
  cfg.hop_samples = 2048;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg = MelConfig{};
  cfg.log_floor = 0.0;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg = MelConfig{};
  cfg.n_mels = 0;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
}

TEST(MixNoise, InfiniteSnrReturnsClean) {
  Rng rng(5);
  const std::vector<double> clean = sine(300, 16000, 100), noise = sine(50, 16000, 300);
  const auto out = audio::mix_noise(clean, noise, std::numeric_limits<double>::infinity(), rng);
  EXPECT_EQ(out.samples, clean);
}

std::vector<double> unit_rms(std::vector<double> x) {
  const double r = audio::rms(x);
  for (auto& v : x) v /= r;
  return x;
}

TEST(MixNoise, GainFromSnr) {
  Rng rng(6);
  const auto clean = unit_rms(sine(440, 16000, 1600));
  const auto noise = unit_rms(std::vector<double>(1600, 1.0));
  EXPECT_NEAR(audio::mix_noise(clean, noise, 0.0, rng).gain, 1.0, 1e-12);
  EXPECT_NEAR(audio::mix_noise(clean, noise, 20.0, rng).gain, 0.1, 1e-12);
}

TEST(MixNoise, MeasuredSnrMatchesRequest) {
  Rng rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    const Tensor c = test::random_tensor({800}, rng), n = test::random_tensor({3000}, rng);
    const std::vector<double> clean(c.data(), c.data() + c.size());
    const std::vector<double> noise(n.data(), n.data() + n.size());
    const double snr = uniform_real(rng, -5.0, 30.0);
    const auto mix = audio::mix_noise(clean, noise, snr, rng);
    std::vector<double> added(clean.size());
    for (std::size_t i = 0; i < clean.size(); ++i) added[i] = mix.samples[i] - clean[i];
    const double measured = 20.0 * std::log10(audio::rms(clean) / audio::rms(added));
    EXPECT_NEAR(measured, snr, 0.1);
  }
}

TEST(MixNoise, SilentSegmentsAreRedrawn) {
  Rng rng(8);
  std::vector<double> noise(1000, 0.0);
  for (std::size_t i = 900; i < 1000; ++i) noise[i] = 1.0;
  const std::vector<double> clean(50, 0.5);
  const auto mix = audio::mix_noise(clean, noise, 0.0, rng);
  EXPECT_GT(audio::rms(std::span<const double>(noise).subspan(mix.offset, 50)), 0.0);
}

TEST(MixNoise, Errors) {
  Rng rng(9);
  const std::vector<double> clean(50, 0.5), silent(100, 0.0), short_noise(10, 1.0);
  EXPECT_THROW(audio::mix_noise(clean, silent, 0.0, rng), ValidationError);
  EXPECT_THROW(audio::mix_noise(clean, short_noise, 0.0, rng), std::invalid_argument);
}

TEST(FitLength, PadsAndCenterCrops) {
  const std::vector<double> x = {1, 2, 3, 4, 5};
  EXPECT_EQ(audio::fit_length(x, 7), (std::vector<double>{1, 2, 3, 4, 5, 0, 0}));
  EXPECT_EQ(audio::fit_length(x, 3), (std::vector<double>{2, 3, 4}));
}

}  // namespace
}  // namespace fsed
