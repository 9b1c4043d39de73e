// Writes a Dirac target file for the synthetic two-blob scene: V views on a
// ring around the origin, usable with `lnrf generate --target`.
#include <iostream>

#include <CLI11.hpp>

#include "lnrf/lnrf.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Render Dirac targets of the synthetic blob scene", "make_blob_targets"};
  std::string out = "blob_targets.lnrf";
  int views = 8, res = 64;
  double radius = 2.5, elevation = 15.0;
  app.add_option("--out", out, "Output tensor file");
  app.add_option("--views", views, "Number of views")->check(CLI::PositiveNumber);
  app.add_option("--res", res, "Image resolution")->check(CLI::PositiveNumber);
  app.add_option("--radius", radius, "Camera distance");
  app.add_option("--elevation", elevation, "Camera elevation in degrees");
  CLI11_PARSE(app, argc, argv);

  try {
    lnrf::BlobScene scene = lnrf::default_blob_scene();
    lnrf::RenderConfig rcfg;
    std::vector<lnrf::Image> images;
    std::vector<lnrf::Camera> cams;
    for (int v = 0; v < views; ++v) {
      cams.push_back(lnrf::orbit_camera(2.0 * lnrf::kPi * v / views, lnrf::deg_to_rad(elevation), radius,
                                        lnrf::deg_to_rad(60.0), res));
      images.push_back(lnrf::render_view(scene, cams.back(), rcfg).image);
    }
    lnrf::write_tensor_file(out, lnrf::target_table(images, cams));
    std::cout << "wrote " << views << " views to " << out << '\n';
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
