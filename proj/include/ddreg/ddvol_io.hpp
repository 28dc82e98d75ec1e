#pragma once

#include <string>

#include "ddreg/volume.hpp"

namespace ddreg {

// ddvol on-disk format: the given path (conventionally *.ddvol) holds the
// JSON header {shape, spacing, origin, dtype, order, endianness}; the raw
// little-endian payload (exactly shape-product elements, x-fastest) lives
// next to it at path + ".raw". Volumes are dtype f32, label maps u8.
// save(load(p)) is byte-identical for both files.

void save_ddvol(const Volume& v, const std::string& path);
void save_ddvol(const LabelMap& m, const std::string& path);

Volume load_volume(const std::string& path);
LabelMap load_labelmap(const std::string& path);

// A displacement field is stored as three scalar ddvols, one per world axis:
// prefix + ".x.ddvol", ".y.ddvol", ".z.ddvol" (components in mm).
void save_field(const DisplacementField& f, const std::string& prefix);
DisplacementField load_field(const std::string& prefix);

}  // namespace ddreg
