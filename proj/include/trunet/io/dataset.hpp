#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "trunet/io/sample.hpp"

namespace trunet {

/// Loads <dir>/images/*.ppm with masks from <dir>/masks/<stem>.pgm, resized
/// to size x size. When `ids` is non-empty only those stems are loaded, in
/// that order. Throws DataError for missing directories or files.
std::vector<Sample> load_dataset_dir(const std::filesystem::path& dir, int size,
                                     const std::vector<std::string>& ids = {});

// First field of each line; blank lines and '#' comments ignored, so a
// manifest.txt also works.
std::vector<std::string> read_id_list(const std::filesystem::path& path);

// Writes images/<id>.ppm, masks/<id>.pgm and manifest.txt.
void write_dataset_dir(const std::vector<Sample>& samples, const std::filesystem::path& dir);

}  // namespace trunet
