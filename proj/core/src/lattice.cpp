#include "msnet/lattice.hpp"

#include <cmath>
#include <unordered_set>

#include "msnet/error.hpp"

namespace msnet {

const char* to_string(SpringClass c) {
  switch (c) {
    case SpringClass::structural: return "structural";
    case SpringClass::shear: return "shear";
    case SpringClass::bending: return "bending";
  }
  return "?";
}

RestLayout rest_layout(const GridSpec& spec) {
  RestLayout layout;
  layout.positions.reserve(static_cast<std::size_t>(spec.particle_count()));
  const double dx = spec.cell_width();
  const double dy = spec.cell_height();
  for (std::int32_t r = 0; r < spec.rows; ++r) {
    for (std::int32_t c = 0; c < spec.cols; ++c) {
      layout.positions.push_back({c * dx, r * dy});
    }
  }
  return layout;
}

SpringCounts expected_spring_counts(const GridSpec& spec, const TopologyFlags& flags) {
  const std::size_t rows = static_cast<std::size_t>(spec.rows);
  const std::size_t cols = static_cast<std::size_t>(spec.cols);
  SpringCounts counts;
  if (flags.structural) counts.structural = rows * (cols - 1) + cols * (rows - 1);
  if (flags.shear_main) counts.shear += (rows - 1) * (cols - 1);
  if (flags.shear_anti) counts.shear += (rows - 1) * (cols - 1);
  if (flags.bending) {
    const std::size_t gap = static_cast<std::size_t>(flags.bending_stride) + 1;
    const std::size_t per_row = cols > gap ? cols - gap : 0;
    const std::size_t per_col = rows > gap ? rows - gap : 0;
    counts.bending = rows * per_row + cols * per_col;
  }
  return counts;
}

namespace {

void validate(const GridSpec& spec, const TopologyFlags& flags) {
  if (spec.rows < 2 || spec.cols < 2)
    throw DataError("build_lattice: grid must be at least 2x2 (got " + std::to_string(spec.rows) +
                    "x" + std::to_string(spec.cols) + ")");
  if (!(spec.width > 0.0) || !(spec.height > 0.0))
    throw DataError("build_lattice: nonpositive physical dimensions");
  if (!flags.any()) throw DataError("build_lattice: all topology flags disabled");
  if (!flags.structural) throw DataError("build_lattice: structural springs are required");
  if (flags.bending && flags.bending_stride < 1)
    throw DataError("build_lattice: bending_stride must be >= 1");
}

}  // namespace

SpringNetwork build_lattice(const GridSpec& spec, const TopologyFlags& flags) {
  validate(spec, flags);

  const RestLayout layout = rest_layout(spec);
  SpringNetwork net;
  net.particle_count = spec.particle_count();
  net.springs.reserve(expected_spring_counts(spec, flags).total());

  const auto id = [&](std::int32_t r, std::int32_t c) { return r * spec.cols + c; };
  const auto add = [&](std::int32_t a, std::int32_t b, SpringClass cls) {
    const Vec2 delta = layout.positions[static_cast<std::size_t>(b)] -
                       layout.positions[static_cast<std::size_t>(a)];
    net.springs.push_back({a, b, norm(delta), cls});
  };

  if (flags.structural) {
    for (std::int32_t r = 0; r < spec.rows; ++r) {
      for (std::int32_t c = 0; c < spec.cols; ++c) {
        if (c + 1 < spec.cols) add(id(r, c), id(r, c + 1), SpringClass::structural);
        if (r + 1 < spec.rows) add(id(r, c), id(r + 1, c), SpringClass::structural);
      }
    }
  }

  if (flags.shear_main || flags.shear_anti) {
    for (std::int32_t r = 0; r + 1 < spec.rows; ++r) {
      for (std::int32_t c = 0; c + 1 < spec.cols; ++c) {
        if (flags.shear_main) add(id(r, c), id(r + 1, c + 1), SpringClass::shear);
        if (flags.shear_anti) add(id(r, c + 1), id(r + 1, c), SpringClass::shear);
      }
    }
  }

  if (flags.bending) {
    const std::int32_t gap = flags.bending_stride + 1;
    for (std::int32_t r = 0; r < spec.rows; ++r) {
      for (std::int32_t c = 0; c + gap < spec.cols; ++c) {
        add(id(r, c), id(r, c + gap), SpringClass::bending);
      }
    }
    for (std::int32_t c = 0; c < spec.cols; ++c) {
      for (std::int32_t r = 0; r + gap < spec.rows; ++r) {
        add(id(r, c), id(r + gap, c), SpringClass::bending);
      }
    }
  }

  // A spring is physically symmetric; duplicates are detected on the
  // unordered endpoint pair.
  std::unordered_set<std::uint64_t> seen;
  seen.reserve(net.springs.size() * 2);
  for (const Spring& s : net.springs) {
    if (s.a == s.b) throw DataError("build_lattice: degenerate spring endpoints");
    const std::uint64_t lo = static_cast<std::uint32_t>(std::min(s.a, s.b));
    const std::uint64_t hi = static_cast<std::uint32_t>(std::max(s.a, s.b));
    if (!seen.insert((hi << 32) | lo).second)
      throw DataError("build_lattice: duplicate spring between particles " + std::to_string(s.a) +
                      " and " + std::to_string(s.b));
  }
  return net;
}

std::vector<Vec3> spring_extension_map(const SpringNetwork& net, std::span<const Vec3> per_particle) {
  if (per_particle.size() != static_cast<std::size_t>(net.particle_count))
    throw DataError("spring_extension_map: field size " + std::to_string(per_particle.size()) +
                    " != particle count " + std::to_string(net.particle_count));
  std::vector<Vec3> out;
  out.reserve(net.springs.size());
  for (const Spring& s : net.springs) {
    out.push_back(per_particle[static_cast<std::size_t>(s.b)] -
                  per_particle[static_cast<std::size_t>(s.a)]);
  }
  return out;
}

std::vector<Vec3> accumulate_particle_forces(const SpringNetwork& net, std::span<const Vec3> per_spring) {
  if (per_spring.size() != net.springs.size())
    throw DataError("accumulate_particle_forces: field size " + std::to_string(per_spring.size()) +
                    " != spring count " + std::to_string(net.springs.size()));
  std::vector<Vec3> out(static_cast<std::size_t>(net.particle_count));
  for (std::size_t i = 0; i < net.springs.size(); ++i) {
    const Spring& s = net.springs[i];
    out[static_cast<std::size_t>(s.a)] -= per_spring[i];
    out[static_cast<std::size_t>(s.b)] += per_spring[i];
  }
  return out;
}

}  // namespace msnet
