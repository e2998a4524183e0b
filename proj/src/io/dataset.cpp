#include "trunet/io/dataset.hpp"

#include <algorithm>
#include <fstream>

#include "trunet/errors.hpp"
#include "trunet/io/netpbm.hpp"
#include "trunet/io/resize.hpp"

namespace trunet {

namespace fs = std::filesystem;

std::vector<Sample> load_dataset_dir(const fs::path& dir, int size, const std::vector<std::string>& ids) {
  const fs::path images = dir / "images", masks = dir / "masks";
  if (!fs::is_directory(images) || !fs::is_directory(masks)) {
    throw DataError(dir.string() + ": expected images/ and masks/ subdirectories");
  }
  std::vector<std::string> stems = ids;
  if (stems.empty()) {
    for (const auto& entry : fs::directory_iterator(images)) {
      if (entry.is_regular_file() && entry.path().extension() == ".ppm") stems.push_back(entry.path().stem().string());
    }
    std::sort(stems.begin(), stems.end());
  }
  if (stems.empty()) throw DataError(images.string() + ": no .ppm images");
  std::vector<Sample> out;
  out.reserve(stems.size());
  for (const auto& stem : stems) {
    const fs::path image_path = images / (stem + ".ppm"), mask_path = masks / (stem + ".pgm");
    if (!fs::exists(image_path)) throw DataError("missing image " + image_path.string());
    if (!fs::exists(mask_path)) throw DataError("missing mask " + mask_path.string());
    Sample s{read_netpbm(image_path), read_mask(mask_path), stem};
    if (s.image.dim(0) != 3) throw DataError(image_path.string() + ": expected a 3-channel PPM");
    if (s.image.dim(1) != s.mask.dim(1) || s.image.dim(2) != s.mask.dim(2)) {
      throw DataError(stem + ": image and mask sizes differ");
    }
    s.image = resize_bilinear(s.image, size, size);
    s.mask = resize_mask(s.mask, size, size);
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<std::string> read_id_list(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<std::string> ids;
  std::string line;
  while (std::getline(in, line)) {
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const auto b = line.find_first_not_of(" \t\r");
    if (b == std::string::npos) continue;
    // First field only, so a manifest works as an id list.
    const auto e = line.find_first_of(" \t\r", b);
    ids.push_back(line.substr(b, e == std::string::npos ? std::string::npos : e - b));
  }
  return ids;
}

void write_dataset_dir(const std::vector<Sample>& samples, const fs::path& dir) {
  fs::create_directories(dir / "images");
  fs::create_directories(dir / "masks");
  std::ofstream manifest(dir / "manifest.txt");
  if (!manifest) throw DataError("cannot write " + (dir / "manifest.txt").string());
  manifest << "# id image mask\n";
  for (const auto& s : samples) {
    validate_sample(s);
    write_netpbm(s.image, dir / "images" / (s.id + ".ppm"));
    write_netpbm(s.mask, dir / "masks" / (s.id + ".pgm"));
    manifest << s.id << " images/" << s.id << ".ppm masks/" << s.id << ".pgm\n";
  }
}

}  // namespace trunet
