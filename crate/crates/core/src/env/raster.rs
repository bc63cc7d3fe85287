//! Software rasterizer: perspective projection, near-plane clipping,
//! z-buffered triangle fill, and flat Lambertian shading under a single
//! directional light.
//!
//! The world is z-up. A camera sits at `eye` and looks along its yaw
//! angle in the floor plane. All arithmetic is f32 with a fixed
//! traversal order, so frames are bit-identical across runs.

use super::LightingSpec;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Vec3 {
    pub x: f32,
    pub y: f32,
    pub z: f32,
}

pub const fn v3(x: f32, y: f32, z: f32) -> Vec3 {
    Vec3 { x, y, z }
}

impl Vec3 {
    pub fn add(self, o: Vec3) -> Vec3 {
        v3(self.x + o.x, self.y + o.y, self.z + o.z)
    }
    pub fn sub(self, o: Vec3) -> Vec3 {
        v3(self.x - o.x, self.y - o.y, self.z - o.z)
    }
    pub fn scale(self, s: f32) -> Vec3 {
        v3(self.x * s, self.y * s, self.z * s)
    }
    pub fn dot(self, o: Vec3) -> f32 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }
    pub fn cross(self, o: Vec3) -> Vec3 {
        v3(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }
    pub fn normalized(self) -> Vec3 {
        let n = self.dot(self).sqrt();
        if n > 0.0 {
            self.scale(1.0 / n)
        } else {
            self
        }
    }
}

/// One flat-shaded triangle with its surface color.
#[derive(Clone, Copy, Debug)]
pub struct Tri {
    pub v: [Vec3; 3],
    pub albedo: [f32; 3],
}

pub struct Camera {
    pub eye: Vec3,
    pub yaw: f32,
}

pub const FOV_X_DEG: f32 = 90.0;
pub const NEAR_PLANE: f32 = 0.1;
pub const FAR_PLANE: f32 = 200.0;

/// Ambient term added to the diffuse response before the albedo multiply.
pub const AMBIENT: f32 = 0.2;
/// Elevation of the directional light above the horizon, degrees.
pub const LIGHT_ELEVATION_DEG: f32 = 55.0;

const SKY_ALBEDO: [f32; 3] = [0.55, 0.74, 0.92];

/// Unit vector pointing from the scene toward the light.
pub fn light_direction(lighting: &LightingSpec) -> Vec3 {
    let az = (lighting.angle_offset_deg as f32).to_radians();
    let el = LIGHT_ELEVATION_DEG.to_radians();
    v3(el.cos() * az.cos(), el.cos() * az.sin(), el.sin())
}

fn shade(albedo: [f32; 3], normal: Vec3, light_dir: Vec3, intensity: f32) -> [u8; 3] {
    let lambert = normal.dot(light_dir).max(0.0);
    // the ambient term stands in for bounce light from the same source,
    // so it scales with the intensity multiplier too
    let level = intensity * (AMBIENT + lambert);
    let mut out = [0u8; 3];
    for (o, &a) in out.iter_mut().zip(&albedo) {
        *o = ((a * level).clamp(0.0, 1.0) * 255.0).round() as u8;
    }
    out
}

fn sky_color(intensity: f32) -> [u8; 3] {
    let level = (0.25 + 0.75 * intensity).clamp(0.0, 1.0);
    let mut out = [0u8; 3];
    for (o, &a) in out.iter_mut().zip(&SKY_ALBEDO) {
        *o = ((a * level).clamp(0.0, 1.0) * 255.0).round() as u8;
    }
    out
}

struct ClipVert {
    cam: Vec3,
}

/// Render triangle groups into an RGB byte frame of `res` x `res` pixels.
pub fn render_frame(groups: &[&[Tri]], camera: &Camera, lighting: &LightingSpec, res: usize) -> Vec<u8> {
    let intensity = lighting.intensity as f32;
    let light_dir = light_direction(lighting);

    let mut color = {
        let sky = sky_color(intensity);
        let mut buf = vec![0u8; res * res * 3];
        for px in buf.chunks_exact_mut(3) {
            px.copy_from_slice(&sky);
        }
        buf
    };
    let mut depth = vec![f32::INFINITY; res * res];

    // camera basis, z-up
    let forward = v3(camera.yaw.cos(), camera.yaw.sin(), 0.0);
    let up = v3(0.0, 0.0, 1.0);
    let right = forward.cross(up);
    let f = 1.0 / (FOV_X_DEG.to_radians() * 0.5).tan();

    for group in groups {
        for tri in *group {
            // world-space face normal for flat shading
            let e1 = tri.v[1].sub(tri.v[0]);
            let e2 = tri.v[2].sub(tri.v[0]);
            let normal = e1.cross(e2).normalized();
            let rgb = shade(tri.albedo, normal, light_dir, intensity);

            // to camera space (looking down -z)
            let cam_verts: Vec<ClipVert> = tri
                .v
                .iter()
                .map(|&p| {
                    let d = p.sub(camera.eye);
                    ClipVert { cam: v3(d.dot(right), d.dot(up), -d.dot(forward)) }
                })
                .collect();

            // clip against the near plane z = -NEAR
            let clipped = clip_near(&cam_verts);
            if clipped.len() < 3 {
                continue;
            }

            // project to screen space with depth
            let screen: Vec<[f32; 3]> = clipped
                .iter()
                .map(|v| {
                    let w = -v.cam.z;
                    let x_ndc = f * v.cam.x / w;
                    let y_ndc = f * v.cam.y / w;
                    let sx = (x_ndc + 1.0) * 0.5 * res as f32;
                    let sy = (1.0 - y_ndc) * 0.5 * res as f32;
                    [sx, sy, w]
                })
                .collect();

            // fan triangulation of the clipped polygon
            for i in 1..screen.len() - 1 {
                fill_triangle(&mut color, &mut depth, res, &screen[0], &screen[i], &screen[i + 1], rgb);
            }
        }
    }
    color
}

fn clip_near(verts: &[ClipVert]) -> Vec<ClipVert> {
    let inside = |v: &ClipVert| v.cam.z <= -NEAR_PLANE;
    let mut out: Vec<ClipVert> = Vec::with_capacity(4);
    for i in 0..verts.len() {
        let a = &verts[i];
        let b = &verts[(i + 1) % verts.len()];
        let a_in = inside(a);
        let b_in = inside(b);
        if a_in {
            out.push(ClipVert { cam: a.cam });
        }
        if a_in != b_in {
            // intersection with z = -NEAR
            let t = (-NEAR_PLANE - a.cam.z) / (b.cam.z - a.cam.z);
            let p = a.cam.add(b.cam.sub(a.cam).scale(t));
            out.push(ClipVert { cam: v3(p.x, p.y, -NEAR_PLANE) });
        }
    }
    out
}

/// Z-buffered fill of one screen-space triangle. Vertices carry
/// [x, y, view_depth]; depth is interpolated as 1/w which is linear in
/// screen space.
fn fill_triangle(
    color: &mut [u8],
    depth: &mut [f32],
    res: usize,
    a: &[f32; 3],
    b: &[f32; 3],
    c: &[f32; 3],
    rgb: [u8; 3],
) {
    let area = edge(a, b, c);
    if area.abs() < 1e-12 {
        return;
    }
    // pixel-center sampling bounds, clamped to the viewport
    let min_x = a[0].min(b[0]).min(c[0]).floor().max(0.0) as usize;
    let max_x = (a[0].max(b[0]).max(c[0]).ceil() as isize).clamp(0, res as isize) as usize;
    let min_y = a[1].min(b[1]).min(c[1]).floor().max(0.0) as usize;
    let max_y = (a[1].max(b[1]).max(c[1]).ceil() as isize).clamp(0, res as isize) as usize;
    if min_x >= max_x || min_y >= max_y {
        return;
    }

    let inv_area = 1.0 / area;
    let inv_w = [1.0 / a[2], 1.0 / b[2], 1.0 / c[2]];
    for py in min_y..max_y {
        let row = py * res;
        for px in min_x..max_x {
            let p = [px as f32 + 0.5, py as f32 + 0.5, 0.0];
            let w0 = edge(b, c, &p) * inv_area;
            let w1 = edge(c, a, &p) * inv_area;
            let w2 = edge(a, b, &p) * inv_area;
            if w0 < 0.0 || w1 < 0.0 || w2 < 0.0 {
                continue;
            }
            // interpolated 1/w; larger means closer
            let inv_depth = w0 * inv_w[0] + w1 * inv_w[1] + w2 * inv_w[2];
            if inv_depth <= 0.0 {
                continue;
            }
            let d = 1.0 / inv_depth;
            let idx = row + px;
            if d < depth[idx] && d <= FAR_PLANE {
                depth[idx] = d;
                let o = idx * 3;
                color[o] = rgb[0];
                color[o + 1] = rgb[1];
                color[o + 2] = rgb[2];
            }
        }
    }
}

#[inline]
fn edge(a: &[f32; 3], b: &[f32; 3], p: &[f32; 3]) -> f32 {
    (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn white_quad_facing_camera() -> Vec<Tri> {
        // a large wall at x = +5 facing back toward -x
        let albedo = [0.85, 0.85, 0.85];
        let (lo, hi) = (-20.0, 20.0);
        vec![
            Tri { v: [v3(5.0, lo, -10.0), v3(5.0, lo, 40.0), v3(5.0, hi, 40.0)], albedo },
            Tri { v: [v3(5.0, lo, -10.0), v3(5.0, hi, 40.0), v3(5.0, hi, -10.0)], albedo },
        ]
    }

    #[test]
    fn frame_is_deterministic() {
        let tris = white_quad_facing_camera();
        let cam = Camera { eye: v3(0.0, 0.0, 3.0), yaw: 0.0 };
        let light = LightingSpec::default();
        let a = render_frame(&[&tris], &cam, &light, 64);
        let b = render_frame(&[&tris], &cam, &light, 64);
        assert_eq!(a, b);
    }

    #[test]
    fn achromatic_wall_fills_view_with_equal_channels() {
        let tris = white_quad_facing_camera();
        let cam = Camera { eye: v3(0.0, 0.0, 3.0), yaw: 0.0 };
        let light = LightingSpec::default();
        let frame = render_frame(&[&tris], &cam, &light, 64);
        for px in frame.chunks_exact(3) {
            assert_eq!(px[0], px[1]);
            assert_eq!(px[1], px[2]);
        }
    }

    #[test]
    fn triangle_behind_camera_is_clipped_out() {
        let albedo = [1.0, 0.0, 0.0];
        let tris = vec![Tri { v: [v3(-5.0, -1.0, 2.0), v3(-5.0, 1.0, 2.0), v3(-5.0, 0.0, 4.0)], albedo }];
        let cam = Camera { eye: v3(0.0, 0.0, 3.0), yaw: 0.0 };
        let frame = render_frame(&[&tris], &cam, &LightingSpec::default(), 32);
        let sky = sky_color(1.0);
        for px in frame.chunks_exact(3) {
            assert_eq!(px, sky);
        }
    }

    #[test]
    fn nearer_triangle_wins_depth_test() {
        let far_wall = vec![Tri {
            v: [v3(10.0, -30.0, -10.0), v3(10.0, 30.0, -10.0), v3(10.0, 0.0, 40.0)],
            albedo: [0.0, 0.0, 1.0],
        }];
        let near_wall = vec![Tri {
            v: [v3(5.0, -30.0, -10.0), v3(5.0, 30.0, -10.0), v3(5.0, 0.0, 40.0)],
            albedo: [1.0, 0.0, 0.0],
        }];
        let cam = Camera { eye: v3(0.0, 0.0, 3.0), yaw: 0.0 };
        // draw order far-then-near and near-then-far must both show red
        for groups in [[&far_wall[..], &near_wall[..]], [&near_wall[..], &far_wall[..]]] {
            let frame = render_frame(&groups, &cam, &LightingSpec::default(), 16);
            let center = ((8 * 16) + 8) * 3;
            assert!(frame[center] > frame[center + 2], "red should occlude blue");
        }
    }

    #[test]
    fn luminance_scales_with_intensity() {
        let tris = white_quad_facing_camera();
        let cam = Camera { eye: v3(0.0, 0.0, 3.0), yaw: 0.0 };
        let mean = |i: f64| {
            let frame = render_frame(
                &[&tris],
                &cam,
                &LightingSpec { angle_offset_deg: 0.0, intensity: i },
                32,
            );
            frame.iter().map(|&v| v as f64).sum::<f64>() / frame.len() as f64
        };
        let half = mean(0.5);
        let full = mean(1.0);
        let double = mean(2.0);
        assert!(half < full, "x0.5 {half} should be dimmer than x1.0 {full}");
        assert!(full <= double);
    }
}
