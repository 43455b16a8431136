#pragma once

#include <string>
#include <variant>

#include "svmorph/volume.h"

namespace svmorph {

// NRRD-subset file format: "NRRD0004" magic, ASCII header with keys
// `type` (float32/int32), `dimension` (3 or 4), `sizes`, `spacings`,
// `encoding: raw`, a blank line, then little-endian raw data, x-fastest.
// Deformation fields use dimension 4 with the vector axis first
// (sizes: 3 nx ny nz, spacings: nan sx sy sz).
//
// float32 + dimension 3 -> Volume, int32 + dimension 3 -> LabelVolume,
// float32 + dimension 4 -> DeformationField.

using AnyGrid = std::variant<Volume, LabelVolume, DeformationField>;

AnyGrid load_grid(const std::string& path);

Volume load_volume(const std::string& path);
LabelVolume load_label_volume(const std::string& path);
DeformationField load_field(const std::string& path);

void save_volume(const Volume& v, const std::string& path);
void save_volume(const LabelVolume& v, const std::string& path);
void save_volume(const DeformationField& f, const std::string& path);

} // namespace svmorph
