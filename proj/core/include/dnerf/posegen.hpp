#pragma once

#include <string>
#include <vector>

#include "dnerf/checkpoint.hpp"
#include "dnerf/manifest.hpp"
#include "dnerf/tcn.hpp"
#include "dnerf/train.hpp"

namespace dnerf {

// What the listener head sees: acoustics, the speaker's pose-delta stream,
// or both. The ablation switch for the forecaster experiments.
enum class ListenerInputMode { kFull, kAudioOnly, kPoseOnly };

std::string listener_mode_to_string(ListenerInputMode m);
ListenerInputMode listener_mode_from_string(const std::string& s, const std::string& field);
int listener_input_dim(ListenerInputMode m);

struct PosegenConfig {
  int kernel = 3;
  int levels = 4;
  int channels = 32;
  int dilation_base = 2;
  Act act = Act::kRelu;
  ListenerInputMode mode = ListenerInputMode::kFull;
  int epochs = 200;
  double lr = 5e-5;
  uint64_t seed = 0;
  double val_fraction = 0.25;
  double window_s = 0.2;

  TcnConfig speaker_tcn() const;
  TcnConfig listener_tcn() const;
};

// One role segment turned into a training sequence: per-frame acoustics of
// the clip plus both participants' pose deltas from the segment's first
// frame. Listener columns are valid only when a second individual exists.
struct PoseSeq {
  std::string tag;  // "<speaker>@<start frame>" for diagnostics
  MatX<double> feat;       // T x 2 raw (zcr, rms)
  MatX<double> spk_delta;  // T x 6 speaker pose deltas
  MatX<double> lis_delta;  // T x 6 listener pose deltas
  bool has_listener = false;
  std::string speaker_id, listener_id;
};

std::vector<PoseSeq> extract_sequences(const ClipDataset& ds, double window_s);

// Chronological split: the trailing fraction becomes validation. Training
// keeps at least one sequence.
void split_sequences(const std::vector<PoseSeq>& all, double val_fraction,
                     std::vector<PoseSeq>& train, std::vector<PoseSeq>& val);

// Per-column standardization fitted on the training split; the deviation is
// floored so constant columns stay finite.
struct Standardizer {
  Eigen::RowVectorXd mean, stdev;

  void fit(const std::vector<const MatX<double>*>& mats);
  MatX<double> apply(const MatX<double>& x) const;
  MatX<double> invert(const MatX<double>& z) const;
};

struct PosegenModel {
  PosegenConfig cfg;
  Tcn<double> speaker, listener;
  Standardizer feat_std, spk_std, lis_std;

  void init(const PosegenConfig& c);
  ParamRefs<double> params();

  // Assembles the listener head's input per the configured mode from
  // standardized acoustics and standardized speaker deltas.
  MatX<double> listener_input(const MatX<double>& feat_s, const MatX<double>& spk_s) const;

  // Closed loop: the speaker head's own (standardized) predictions feed the
  // listener head. Outputs are raw pose deltas with Euler columns wrapped to
  // (-pi, pi].
  void predict(const MatX<double>& feat_raw, MatX<double>& spk_delta,
               MatX<double>& lis_delta) const;
};

struct PosegenTrainResult {
  std::vector<double> epoch_loss;
};

// Teacher-forced MSE on standardized deltas, one Adam step per sequence,
// sequence order reshuffled per epoch from the config seed. Fits the
// standardizers from the given sequences first.
PosegenTrainResult train_posegen(PosegenModel& model, const std::vector<PoseSeq>& train_seqs);

struct PosegenEval {
  double speaker_mse = 0;
  double listener_mse = 0;
  double copy_last_speaker_mse = 0;
  double copy_last_listener_mse = 0;
};

// Teacher-forced validation error in raw delta space, against the
// copy-previous-frame baseline in the same space.
PosegenEval eval_posegen(const PosegenModel& model, const std::vector<PoseSeq>& val);

Checkpoint posegen_to_checkpoint(const PosegenModel& model);
void posegen_from_checkpoint(const Checkpoint& ck, PosegenModel& model, const std::string& field);

}  // namespace dnerf
