#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "av/config.hpp"
#include "av/rng.hpp"
#include "av/signal.hpp"
#include "av/tensor.hpp"

namespace av::data {

// Pixel-space box, half-open [x0, x1) x [y0, y1).
struct Box {
  double x0 = 0, y0 = 0, x1 = 0, y1 = 0;
  bool contains(double x, double y) const { return x >= x0 && x < x1 && y >= y0 && y < y1; }
  double area() const { return std::max(0.0, x1 - x0) * std::max(0.0, y1 - y0); }
};

enum class MotionKind { bounce_h, bounce_v, orbit, drift };
enum class TimbreKind { pure, rich };

struct SpriteTrack {
  bool sounding = false;
  double fundamental_hz = 0.0;
  TimbreKind timbre = TimbreKind::pure;
  MotionKind motion = MotionKind::bounce_h;
  std::vector<double> onsets;          // event times in seconds, source timeline
  std::vector<Box> boxes;              // per window frame
  std::vector<uint8_t> pulse_frames;   // per window frame: 1 when pulsing
  signal::Waveform track_audio;        // isolated source audio (may be empty)
};

struct AVClip {
  Tensor video;  // [window_frames, H, W, 3] in [0,1]
  double frame_rate = 0.0;
  signal::Waveform audio;  // full source audio (window plus shift slack)
  int samples_per_frame = 0;
  int64_t window_start_frame = 0;
  int64_t source_frames = 0;
  int64_t audio_offset_samples = 0;  // alignment jitter from augmentation

  std::vector<double> onset_times;  // sounding-sprite events, source timeline
  std::vector<Box> source_track;    // sounding-sprite box per window frame
  std::vector<SpriteTrack> sprites;

  int class_id = -1;  // action label; -1 when unlabeled
  uint64_t seed = 0;

  int64_t window_frames() const { return video.rank() == 4 ? video.dim(0) : 0; }
  int height() const { return static_cast<int>(video.dim(1)); }
  int width() const { return static_cast<int>(video.dim(2)); }
  int sample_rate() const { return audio.sample_rate; }
  double window_start_s() const { return static_cast<double>(window_start_frame) / frame_rate; }

  // Audio synchronized with the video window, shifted by shift_samples.
  // Throws when the requested span leaves the source recording.
  signal::Waveform window_audio(int64_t shift_samples = 0) const;
  // Same span cut from an arbitrary waveform of source length (sprite tracks).
  signal::Waveform window_audio_of(const signal::Waveform& source,
                                   int64_t shift_samples = 0) const;
};

struct SceneParams {
  int window_frames = 8;
  int source_frames = 30;
  double frame_rate = 7.5;
  int height = 32;
  int width = 32;
  int samples_per_frame = 256;
  int audio_channels = 1;
  int n_sounding = 1;
  int n_distractors = 1;
  double onset_gap_min_s = 0.35;
  double onset_gap_max_s = 0.8;
  double tone_min_hz = 150.0;
  double tone_max_hz = 700.0;
  double burst_s = 0.25;
  double noise_burst_prob = 0.25;
  int sprite_min_px = 8;
  int sprite_max_px = 12;
  int action_class = -1;  // >= 0 pins motion and timbre of the sounding sprite

  int sample_rate() const;
  void validate() const;
};

SceneParams scene_params_from(const cfg::RunConfig& c);

// Deterministic synthetic scene: sounding sprites pulse exactly at their tone
// onsets, distractors move (and pulse) at non-onset times only.
AVClip make_synthetic_scene(const SceneParams& params, uint64_t seed);

// Signed shift with |shift| uniform in [lo_s, hi_s] and a fair sign.
double sample_shift(Rng& rng, double lo_s, double hi_s);

struct AlignmentPair {
  AVClip clip;
  double shift_s = 0.0;
  signal::Waveform aligned_audio;
  signal::Waveform shifted_audio;
};

AlignmentPair make_alignment_pair(const AVClip& clip, double shift_s);

struct MixtureConfig {
  signal::StftConfig stft;
  double normalize_target = 0.01;
};

struct MixtureSample {
  Tensor video;  // on-screen clip's window frames
  signal::Spectrogram fg, bg, mix;
  signal::Waveform fg_wave, bg_wave, mix_wave;  // mono
};

// clip_a provides the on-screen track, clip_b the off-screen one. Windows are
// power-normalized before summation; mixing happens in the waveform domain.
MixtureSample make_mixture(const AVClip& clip_a, const AVClip& clip_b,
                           const MixtureConfig& cfg);

struct AugmentOps {
  int crop_x = 0, crop_y = 0;      // top-left of the crop
  int crop_w = 0, crop_h = 0;      // 0 means full frame
  bool flip = false;               // horizontal
  int64_t jitter_samples = 0;      // audio shift, |jitter| <= one frame
};

struct AugmentConfig {
  int crop_w = 0, crop_h = 0;   // 0 disables cropping
  bool flip = true;
  int max_jitter_frames = 1;
};

AVClip apply_augment(const AVClip& clip, const AugmentOps& ops);
AVClip augment(const AVClip& clip, const AugmentConfig& cfg, Rng& rng);

// ---- datasets on disk ------------------------------------------------------
//
// One directory per clip: video.ten (uint8 tensor), audio.wav (float32),
// trackN.wav for isolated source tracks when present, meta.txt (key = value).
void write_clip(const std::filesystem::path& dir, const AVClip& clip);
AVClip read_clip(const std::filesystem::path& dir);

void gen_dataset(const std::filesystem::path& out_dir, int n_clips, uint64_t seed,
                 const SceneParams& params, int threads, bool action_labels,
                 int n_action_classes);
std::vector<std::filesystem::path> list_clip_dirs(const std::filesystem::path& dataset_dir);
std::vector<std::pair<std::string, int>> read_label_manifest(const std::filesystem::path& file);

}  // namespace av::data
