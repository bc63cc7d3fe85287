//! Triangle-mesh builders for the chamber, arena, agent bodies, and
//! imprinting stimuli. Windings are chosen so that computed face
//! normals point toward the viewer side (inward for room interiors,
//! outward for solid bodies).

use super::raster::{v3, Tri, Vec3};

pub const AGENT_BODY_ALBEDO: [f32; 3] = [0.93, 0.80, 0.12];
pub const AGENT_STRIPE_ALBEDO: [f32; 3] = [0.48, 0.40, 0.06];
pub const ROOM_ALBEDO: [f32; 3] = [0.85, 0.85, 0.85];
const GROUND_BASE: [f32; 3] = [0.24, 0.52, 0.18];
const FENCE_ALBEDO: [f32; 3] = [0.35, 0.22, 0.16];
const ROCK_ALBEDO: [f32; 3] = [0.52, 0.52, 0.54];
const TREE_ALBEDO: [f32; 3] = [0.10, 0.42, 0.14];

fn quad(p0: Vec3, p1: Vec3, p2: Vec3, p3: Vec3, albedo: [f32; 3], out: &mut Vec<Tri>) {
    out.push(Tri { v: [p0, p1, p2], albedo });
    out.push(Tri { v: [p0, p2, p3], albedo });
}

/// Closed cubic chamber centered on the origin: floor, ceiling, and four
/// walls, all facing inward.
pub fn box_room(half: f32, height: f32, albedo: [f32; 3]) -> Vec<Tri> {
    let mut tris = Vec::with_capacity(12);
    let (l, h) = (-half, half);
    // floor (+z normal)
    quad(v3(l, l, 0.0), v3(h, l, 0.0), v3(h, h, 0.0), v3(l, h, 0.0), albedo, &mut tris);
    // ceiling (-z normal)
    quad(v3(l, l, height), v3(l, h, height), v3(h, h, height), v3(h, l, height), albedo, &mut tris);
    // wall x=+half (-x normal)
    quad(v3(h, l, 0.0), v3(h, l, height), v3(h, h, height), v3(h, h, 0.0), albedo, &mut tris);
    // wall x=-half (+x normal)
    quad(v3(l, l, 0.0), v3(l, h, 0.0), v3(l, h, height), v3(l, l, height), albedo, &mut tris);
    // wall y=+half (-y normal)
    quad(v3(l, h, 0.0), v3(h, h, 0.0), v3(h, h, height), v3(l, h, height), albedo, &mut tris);
    // wall y=-half (+y normal)
    quad(v3(l, l, 0.0), v3(l, l, height), v3(h, l, height), v3(h, l, 0.0), albedo, &mut tris);
    tris
}

/// Upright cylinder with an outward-facing side and a top cap. Side
/// segments whose outward direction lies within `stripe_half_angle` of
/// `stripe_heading` use the stripe color.
#[allow(clippy::too_many_arguments)]
pub fn cylinder(
    center: [f32; 2],
    base_z: f32,
    radius: f32,
    height: f32,
    segments: usize,
    body: [f32; 3],
    stripe: Option<(f32, f32)>, // (heading, half-angle)
    out: &mut Vec<Tri>,
) {
    let ring = |angle: f32, z: f32| {
        v3(center[0] + radius * angle.cos(), center[1] + radius * angle.sin(), z)
    };
    let top = base_z + height;
    let step = std::f32::consts::TAU / segments as f32;
    for i in 0..segments {
        let a0 = i as f32 * step;
        let a1 = a0 + step;
        let mid = a0 + 0.5 * step;
        let albedo = match stripe {
            Some((heading, half_angle)) => {
                let mut d = (mid - heading) % std::f32::consts::TAU;
                if d > std::f32::consts::PI {
                    d -= std::f32::consts::TAU;
                }
                if d < -std::f32::consts::PI {
                    d += std::f32::consts::TAU;
                }
                if d.abs() <= half_angle {
                    AGENT_STRIPE_ALBEDO
                } else {
                    body
                }
            }
            None => body,
        };
        quad(ring(a0, base_z), ring(a1, base_z), ring(a1, top), ring(a0, top), albedo, out);
        // top cap fan segment (+z normal)
        out.push(Tri {
            v: [v3(center[0], center[1], top), ring(a0, top), ring(a1, top)],
            albedo: body,
        });
    }
}

/// An agent body: yellow cylinder with a darker stripe marking its heading.
pub fn agent_body(position: [f32; 2], heading: f32, out: &mut Vec<Tri>) {
    cylinder(
        position,
        0.0,
        super::AGENT_RADIUS as f32,
        super::AGENT_HEIGHT as f32,
        10,
        AGENT_BODY_ALBEDO,
        Some((heading, 0.7)),
        out,
    );
}

fn hash2(seed: u64, a: u64, b: u64) -> u64 {
    let mut x = seed ^ a.wrapping_mul(0x9E3779B97F4A7C15) ^ b.wrapping_mul(0xBF58476D1CE4E5B9);
    x ^= x >> 30;
    x = x.wrapping_mul(0xBF58476D1CE4E5B9);
    x ^= x >> 27;
    x = x.wrapping_mul(0x94D049BB133111EB);
    x ^ (x >> 31)
}

fn unit(seed: u64, a: u64, b: u64) -> f32 {
    (hash2(seed, a, b) >> 40) as f32 / (1u64 << 24) as f32
}

/// Grassy ground: a tile grid with low-frequency per-tile color noise.
pub fn ground_patch(extent: f32, tiles: usize, seed: u64, out: &mut Vec<Tri>) {
    let tile = 2.0 * extent / tiles as f32;
    for i in 0..tiles {
        for j in 0..tiles {
            let x0 = -extent + i as f32 * tile;
            let y0 = -extent + j as f32 * tile;
            let n = unit(seed, i as u64, j as u64) - 0.5;
            let albedo = [
                (GROUND_BASE[0] + 0.10 * n).clamp(0.0, 1.0),
                (GROUND_BASE[1] + 0.14 * n).clamp(0.0, 1.0),
                (GROUND_BASE[2] + 0.08 * n).clamp(0.0, 1.0),
            ];
            quad(
                v3(x0, y0, 0.0),
                v3(x0 + tile, y0, 0.0),
                v3(x0 + tile, y0 + tile, 0.0),
                v3(x0, y0 + tile, 0.0),
                albedo,
                out,
            );
        }
    }
}

/// Ring of square fence posts around the arena.
pub fn fence_ring(radius: f32, posts: usize, height: f32, half_width: f32, out: &mut Vec<Tri>) {
    for i in 0..posts {
        let angle = i as f32 * std::f32::consts::TAU / posts as f32;
        let cx = radius * angle.cos();
        let cy = radius * angle.sin();
        post(cx, cy, height, half_width, out);
    }
}

fn post(cx: f32, cy: f32, height: f32, hw: f32, out: &mut Vec<Tri>) {
    let (l, r) = (cx - hw, cx + hw);
    let (b, t) = (cy - hw, cy + hw);
    let albedo = FENCE_ALBEDO;
    // four outward sides
    quad(v3(r, b, 0.0), v3(r, t, 0.0), v3(r, t, height), v3(r, b, height), albedo, out);
    quad(v3(l, t, 0.0), v3(l, b, 0.0), v3(l, b, height), v3(l, t, height), albedo, out);
    quad(v3(r, t, 0.0), v3(l, t, 0.0), v3(l, t, height), v3(r, t, height), albedo, out);
    quad(v3(l, b, 0.0), v3(r, b, 0.0), v3(r, b, height), v3(l, b, height), albedo, out);
    // top cap
    quad(v3(l, b, height), v3(r, b, height), v3(r, t, height), v3(l, t, height), albedo, out);
}

/// Low-poly UV sphere.
pub fn uv_sphere(center: Vec3, radius: f32, rings: usize, segments: usize, albedo: [f32; 3], out: &mut Vec<Tri>) {
    scaled_sphere(center, v3(radius, radius, radius), rings, segments, albedo, 0.0, out);
}

fn scaled_sphere(
    center: Vec3,
    radii: Vec3,
    rings: usize,
    segments: usize,
    albedo: [f32; 3],
    yaw: f32,
    out: &mut Vec<Tri>,
) {
    let point = |ring: usize, seg: usize| {
        let phi = std::f32::consts::PI * ring as f32 / rings as f32;
        let theta = std::f32::consts::TAU * seg as f32 / segments as f32 + yaw;
        let x = radii.x * phi.sin() * theta.cos();
        let y = radii.y * phi.sin() * theta.sin();
        let z = radii.z * phi.cos();
        center.add(v3(x, y, z))
    };
    for ring in 0..rings {
        for seg in 0..segments {
            let p00 = point(ring, seg);
            let p01 = point(ring, seg + 1);
            let p10 = point(ring + 1, seg);
            let p11 = point(ring + 1, seg + 1);
            if ring != 0 {
                out.push(Tri { v: [p00, p11, p01], albedo });
            }
            if ring != rings - 1 {
                out.push(Tri { v: [p00, p10, p11], albedo });
            }
        }
    }
}

/// Upright cone with a base disk.
pub fn cone(center: [f32; 2], base_z: f32, radius: f32, height: f32, segments: usize, albedo: [f32; 3], out: &mut Vec<Tri>) {
    let apex = v3(center[0], center[1], base_z + height);
    let ring = |angle: f32| v3(center[0] + radius * angle.cos(), center[1] + radius * angle.sin(), base_z);
    let step = std::f32::consts::TAU / segments as f32;
    for i in 0..segments {
        let a0 = i as f32 * step;
        let a1 = a0 + step;
        out.push(Tri { v: [ring(a0), ring(a1), apex], albedo });
        out.push(Tri { v: [ring(a1), ring(a0), v3(center[0], center[1], base_z)], albedo });
    }
}

/// Axis-aligned cube rotated by `yaw` around its vertical axis.
pub fn cube(center: Vec3, half: f32, yaw: f32, albedo: [f32; 3], out: &mut Vec<Tri>) {
    let rot = |x: f32, y: f32| {
        let (s, c) = yaw.sin_cos();
        (x * c - y * s, x * s + y * c)
    };
    let corner = |sx: f32, sy: f32, sz: f32| {
        let (x, y) = rot(sx * half, sy * half);
        v3(center.x + x, center.y + y, center.z + sz * half)
    };
    let (a, b, c, d) = (corner(-1.0, -1.0, -1.0), corner(1.0, -1.0, -1.0), corner(1.0, 1.0, -1.0), corner(-1.0, 1.0, -1.0));
    let (e, f, g, h) = (corner(-1.0, -1.0, 1.0), corner(1.0, -1.0, 1.0), corner(1.0, 1.0, 1.0), corner(-1.0, 1.0, 1.0));
    quad(e, f, g, h, albedo, out); // top
    quad(a, d, c, b, albedo, out); // bottom
    quad(a, b, f, e, albedo, out); // -y side
    quad(c, d, h, g, albedo, out); // +y side
    quad(b, c, g, f, albedo, out); // +x side
    quad(d, a, e, h, albedo, out); // -x side
}

/// Torus lying flat, rotated by `yaw` around the vertical axis.
#[allow(clippy::too_many_arguments)]
pub fn torus(
    center: Vec3,
    major: f32,
    minor: f32,
    seg_u: usize,
    seg_v: usize,
    yaw: f32,
    albedo: [f32; 3],
    out: &mut Vec<Tri>,
) {
    let point = |u: usize, v: usize| {
        let a = std::f32::consts::TAU * u as f32 / seg_u as f32 + yaw;
        let b = std::f32::consts::TAU * v as f32 / seg_v as f32;
        let r = major + minor * b.cos();
        v3(center.x + r * a.cos(), center.y + r * a.sin(), center.z + minor * b.sin())
    };
    for u in 0..seg_u {
        for v in 0..seg_v {
            let p00 = point(u, v);
            let p01 = point(u, v + 1);
            let p10 = point(u + 1, v);
            let p11 = point(u + 1, v + 1);
            out.push(Tri { v: [p00, p10, p11], albedo });
            out.push(Tri { v: [p00, p11, p01], albedo });
        }
    }
}

/// A squashed gray boulder.
pub fn rock(center: [f32; 2], size: f32, seed: u64, out: &mut Vec<Tri>) {
    let squash = 0.5 + 0.3 * unit(seed, 1, 0);
    let stretch = 0.8 + 0.5 * unit(seed, 2, 0);
    scaled_sphere(
        v3(center[0], center[1], size * squash * 0.8),
        v3(size * stretch, size, size * squash),
        4,
        7,
        ROCK_ALBEDO,
        unit(seed, 3, 0) * std::f32::consts::TAU,
        out,
    );
}

/// A conifer-ish tree: green cone on a short trunk.
pub fn tree(center: [f32; 2], height: f32, out: &mut Vec<Tri>) {
    let trunk_h = height * 0.2;
    cylinder(center, 0.0, height * 0.08, trunk_h, 6, FENCE_ALBEDO, None, out);
    cone(center, trunk_h, height * 0.35, height * 0.8, 8, TREE_ALBEDO, out);
}

#[cfg(test)]
mod tests {
    use super::*;

    fn face_normal(t: &Tri) -> Vec3 {
        t.v[1].sub(t.v[0]).cross(t.v[2].sub(t.v[0])).normalized()
    }

    #[test]
    fn room_faces_point_inward() {
        let tris = box_room(30.0, 60.0, ROOM_ALBEDO);
        let interior = v3(0.0, 0.0, 30.0);
        for t in &tris {
            let centroid = t.v[0].add(t.v[1]).add(t.v[2]).scale(1.0 / 3.0);
            let n = face_normal(t);
            assert!(n.dot(interior.sub(centroid)) > 0.0, "face at {centroid:?} points outward");
        }
    }

    #[test]
    fn cylinder_sides_point_outward() {
        let mut tris = Vec::new();
        cylinder([2.0, -1.0], 0.0, 1.2, 3.5, 10, AGENT_BODY_ALBEDO, None, &mut tris);
        let axis = v3(2.0, -1.0, 0.0);
        for t in &tris {
            let centroid = t.v[0].add(t.v[1]).add(t.v[2]).scale(1.0 / 3.0);
            let n = face_normal(t);
            let outward = v3(centroid.x - axis.x, centroid.y - axis.y, 0.0);
            // side faces radiate outward; the cap faces up
            if centroid.z < 3.4 {
                assert!(n.dot(outward) > 0.0, "side face points inward");
            } else {
                assert!(n.z > 0.0, "cap points down");
            }
        }
    }

    #[test]
    fn agent_body_has_stripe_toward_heading() {
        let mut tris = Vec::new();
        agent_body([0.0, 0.0], 0.0, &mut tris);
        let stripe: Vec<&Tri> = tris.iter().filter(|t| t.albedo == AGENT_STRIPE_ALBEDO).collect();
        assert!(!stripe.is_empty(), "no stripe faces");
        for t in stripe {
            let centroid = t.v[0].add(t.v[1]).add(t.v[2]).scale(1.0 / 3.0);
            assert!(centroid.x > 0.0, "stripe face away from heading");
        }
    }

    #[test]
    fn ground_noise_is_deterministic_per_seed() {
        let mut a = Vec::new();
        let mut b = Vec::new();
        ground_patch(36.0, 8, 7, &mut a);
        ground_patch(36.0, 8, 7, &mut b);
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.albedo, y.albedo);
        }
        let mut c = Vec::new();
        ground_patch(36.0, 8, 8, &mut c);
        assert!(a.iter().zip(&c).any(|(x, y)| x.albedo != y.albedo));
    }
}
