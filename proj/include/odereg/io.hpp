#pragma once

// On-disk formats. Every binary payload is little-endian regardless of host.
//
// Volume:   JSON header {kind, extents [x,y,z], spacing [x,y,z], dtype "f32",
//           byte_order "little", payload} + raw f32, x fastest.
// Field:    same header plus resolution_fraction and components ["x","y","z"];
//           payload holds 3 interleaved components per voxel.
// In memory axis 2 is x, axis 1 is y and axis 0 is z.

#include <filesystem>
#include <string>
#include <vector>

#include "odereg/adam.hpp"
#include "odereg/field.hpp"
#include "odereg/model.hpp"
#include "odereg/training.hpp"

namespace odereg {

namespace fs = std::filesystem;

// Payload file that sits next to a header: same stem, ".raw" extension.
fs::path payload_path(const fs::path& header);

void write_volume(const fs::path& header, const Volume& v);
Volume read_volume(const fs::path& header);

void write_field(const fs::path& header, const DisplacementField& f);
DisplacementField read_field(const fs::path& header);

// CSV "phase,index,x,y,z" in voxel coordinates.
void write_landmarks(const fs::path& csv, const std::vector<LandmarkSet>& sets);
std::vector<LandmarkSet> read_landmarks(const fs::path& csv);

struct Checkpoint {
  ModelParams<float> params;
  AdamState<float> optimizer;
  bool has_optimizer = false;
};

void save_checkpoint(const fs::path& path, const ModelParams<float>& params,
                     const AdamState<float>* optimizer);
Checkpoint load_checkpoint(const fs::path& path);

// 8-bit binary PGM of slice `index` orthogonal to `axis`, intensities clamped
// to [lo, hi]. index < 0 selects the middle slice.
void write_pgm_slice(const fs::path& path, const Volume& v, int axis = 0, int index = -1,
                     double lo = 0.0, double hi = 1.0);

void write_loss_log(const fs::path& csv, const std::vector<TrainLogEntry>& log);

// Reads a whole file, throwing FormatError if it cannot be opened.
std::string read_text_file(const fs::path& path);
void write_text_file(const fs::path& path, const std::string& text);

}  // namespace odereg
