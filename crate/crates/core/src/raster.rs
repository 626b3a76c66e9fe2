//! Pinhole projection of meshes and tiny-square coverage counting.

use crate::error::{Error, Result};
use crate::geom::{convex_row_span, Bbox2, Point2, Vec3};
use crate::mesh::TriangleMesh;
use crate::trajectory::Pose;

/// A mesh triangle projected onto a plane `z = const`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectedTriangle {
    pub pts: [Point2; 3],
    /// Mean distance of the source vertices from the centre of projection.
    pub mean_range: f64,
    pub bbox: Bbox2,
}

/// Central projection of `p` through `center` onto the plane `z = plane_z`.
pub fn project_point(p: Vec3, center: Vec3, plane_z: f64) -> Point2 {
    let t = (plane_z - center.z) / (p.z - center.z);
    Point2::new(center.x + t * (p.x - center.x), center.y + t * (p.y - center.y))
}

/// Projects every triangle of the posed mesh through `center` onto the
/// plane `z = plane_z`. A plane behind the centre (`plane_z < center.z`)
/// is the image side and yields the inverted image.
///
/// Triangles entirely behind the lens plane `z = center.z` are dropped; a
/// triangle that crosses it is an error.
pub fn project_mesh(
    mesh: &TriangleMesh,
    pose: &Pose,
    center: Vec3,
    plane_z: f64,
) -> Result<Vec<ProjectedTriangle>> {
    let world: Vec<Vec3> = mesh.vertices.iter().map(|&v| pose.apply(v)).collect();
    project_world(&world, &mesh.triangles, center, plane_z)
}

/// As [`project_mesh`] for vertices already in world coordinates.
pub fn project_world(
    world: &[Vec3],
    triangles: &[[usize; 3]],
    center: Vec3,
    plane_z: f64,
) -> Result<Vec<ProjectedTriangle>> {
    const EPS: f64 = 1e-9;
    let mut out = Vec::with_capacity(triangles.len());
    for t in triangles {
        let v = t.map(|k| world[k]);
        let front = v.iter().filter(|p| p.z - center.z > EPS).count();
        if front == 0 {
            continue;
        }
        if front < 3 {
            return Err(Error::Geometry(format!(
                "actor intersects the lens plane z = {:.3} m near ({:.3}, {:.3}, {:.3})",
                center.z, v[0].x, v[0].y, v[0].z
            )));
        }
        let pts = v.map(|p| project_point(p, center, plane_z));
        out.push(ProjectedTriangle {
            pts,
            mean_range: v.iter().map(|&p| (p - center).norm()).sum::<f64>() / 3.0,
            bbox: Bbox2::of(&pts),
        });
    }
    Ok(out)
}

/// Reusable scratch space for [`Rasterizer::coverage`].
#[derive(Debug, Default)]
pub struct Rasterizer {
    rows: Vec<Vec<(f64, f64)>>,
}

impl Rasterizer {
    pub fn new() -> Self {
        Self::default()
    }

    /// Number of grid squares (side `1/res`, globally aligned) whose
    /// centres lie inside both the convex `region` and the union of
    /// `tris`.
    pub fn count(&mut self, tris: &[ProjectedTriangle], region: &[Point2], res: f64) -> u64 {
        let rb = Bbox2::of(region);
        let k0 = (rb.min.y * res - 0.5).ceil() as i64;
        let k1 = (rb.max.y * res - 0.5).floor() as i64;
        if k1 < k0 {
            return 0;
        }
        let nrows = (k1 - k0 + 1) as usize;
        if self.rows.len() < nrows {
            self.rows.resize_with(nrows, Vec::new);
        }
        for r in &mut self.rows[..nrows] {
            r.clear();
        }
        let mut any = false;
        for t in tris {
            if !t.bbox.intersects(&rb) {
                continue;
            }
            let a = ((t.bbox.min.y * res - 0.5).ceil() as i64).max(k0);
            let b = ((t.bbox.max.y * res - 0.5).floor() as i64).min(k1);
            for k in a..=b {
                let y = (k as f64 + 0.5) / res;
                if let Some(span) = convex_row_span(&t.pts, y) {
                    self.rows[(k - k0) as usize].push(span);
                    any = true;
                }
            }
        }
        if !any {
            return 0;
        }
        let mut total = 0u64;
        for (i, row) in self.rows[..nrows].iter_mut().enumerate() {
            if row.is_empty() {
                continue;
            }
            let y = ((k0 + i as i64) as f64 + 0.5) / res;
            let Some((qa, qb)) = convex_row_span(region, y) else {
                continue;
            };
            row.sort_by(|p, q| p.0.total_cmp(&q.0));
            let mut cur = row[0];
            for &(a, b) in &row[1..] {
                if a <= cur.1 {
                    cur.1 = cur.1.max(b);
                } else {
                    total += centres_in(cur.0.max(qa), cur.1.min(qb), res);
                    cur = (a, b);
                }
            }
            total += centres_in(cur.0.max(qa), cur.1.min(qb), res);
        }
        total
    }

    /// Covered area (m^2 in the projection plane).
    pub fn coverage(&mut self, tris: &[ProjectedTriangle], region: &[Point2], res: f64) -> f64 {
        self.count(tris, region, res) as f64 / (res * res)
    }
}

/// Grid centres `(j + 0.5) / res` inside `[a, b]`.
fn centres_in(a: f64, b: f64, res: f64) -> u64 {
    if b < a {
        return 0;
    }
    let j0 = (a * res - 0.5).ceil();
    let j1 = (b * res - 0.5).floor();
    if j1 < j0 {
        0
    } else {
        (j1 - j0) as u64 + 1
    }
}

/// One-shot coverage of a convex region by the union of triangles.
pub fn rasterize_coverage(tris: &[ProjectedTriangle], region: &[Point2], res: f64) -> Result<f64> {
    if !(res >= 1.0) {
        return Err(Error::Domain(format!("grid resolution must be >= 1, got {res}")));
    }
    Ok(Rasterizer::new().coverage(tris, region, res))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::Label;

    fn tri(a: (f64, f64), b: (f64, f64), c: (f64, f64)) -> ProjectedTriangle {
        let pts = [Point2::new(a.0, a.1), Point2::new(b.0, b.1), Point2::new(c.0, c.1)];
        ProjectedTriangle {
            pts,
            mean_range: 1.0,
            bbox: Bbox2::of(&pts),
        }
    }

    fn square(x0: f64, y0: f64, s: f64) -> [Point2; 4] {
        [
            Point2::new(x0, y0),
            Point2::new(x0 + s, y0),
            Point2::new(x0 + s, y0 + s),
            Point2::new(x0, y0 + s),
        ]
    }

    #[test]
    fn facing_square_projects_to_scaled_square() {
        let (s, r, f) = (0.4, 6.0, 0.02);
        let verts = vec![
            Vec3::new(-s / 2.0, 1.0 - s / 2.0, 0.0),
            Vec3::new(s / 2.0, 1.0 - s / 2.0, 0.0),
            Vec3::new(s / 2.0, 1.0 + s / 2.0, 0.0),
            Vec3::new(-s / 2.0, 1.0 + s / 2.0, 0.0),
        ];
        let mesh = TriangleMesh::new(verts, vec![[0, 1, 2], [0, 2, 3]], Label::Clutter).unwrap();
        let center = Vec3::new(0.0, 1.0, 0.0);
        let img = project_mesh(&mesh, &Pose::at(Vec3::new(0.0, 0.0, r)), center, -f).unwrap();
        let xs: Vec<f64> = img.iter().flat_map(|t| t.pts.map(|p| p.x)).collect();
        let side = xs.iter().cloned().fold(f64::MIN, f64::max) - xs.iter().cloned().fold(f64::MAX, f64::min);
        assert!((side - s * f / r).abs() < 1e-9);
    }

    #[test]
    fn empty_mesh_projects_to_nothing() {
        let m = TriangleMesh::empty(Label::Clutter);
        assert!(project_mesh(&m, &Pose::at(Vec3::new(0.0, 0.0, 5.0)), Vec3::default(), 5.0)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn straddling_mesh_is_rejected_and_behind_is_clipped() {
        let verts = vec![
            Vec3::new(0.0, 0.0, -1.0),
            Vec3::new(1.0, 0.0, 1.0),
            Vec3::new(0.0, 1.0, 1.0),
            Vec3::new(0.0, 0.0, -2.0),
            Vec3::new(1.0, 0.0, -2.0),
            Vec3::new(0.0, 1.0, -2.0),
        ];
        let m = TriangleMesh::new(verts.clone(), vec![[0, 1, 2]], Label::Clutter).unwrap();
        assert!(project_mesh(&m, &Pose::at(Vec3::default()), Vec3::default(), 5.0).is_err());
        let m = TriangleMesh::new(verts, vec![[3, 4, 5]], Label::Clutter).unwrap();
        assert!(project_mesh(&m, &Pose::at(Vec3::default()), Vec3::default(), 5.0)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn half_cover_by_diagonal_triangle() {
        let res = 200.0;
        let region = square(0.1, 0.2, 0.5);
        let t = tri((0.1, 0.2), (0.6, 0.2), (0.6, 0.7));
        let a = rasterize_coverage(&[t], &region, res).unwrap();
        assert!((a - 0.125).abs() / 0.125 < 2.0 / res, "{a}");
    }

    #[test]
    fn outside_triangle_covers_nothing() {
        let t = tri((2.0, 2.0), (3.0, 2.0), (2.0, 3.0));
        assert_eq!(rasterize_coverage(&[t], &square(0.0, 0.0, 1.0), 100.0).unwrap(), 0.0);
    }

    #[test]
    fn overlap_is_not_double_counted() {
        let region = square(0.0, 0.0, 1.0);
        let t = tri((0.1, 0.1), (0.9, 0.1), (0.1, 0.9));
        let one = rasterize_coverage(&[t], &region, 100.0).unwrap();
        let two = rasterize_coverage(&[t, t], &region, 100.0).unwrap();
        assert_eq!(one, two);
        assert!(rasterize_coverage(&[t], &region, 0.5).is_err());
    }

    #[test]
    fn row_union_matches_scan_of_centres() {
        let region = square(-0.047, -0.043, 0.6);
        let tris = [
            tri((0.0, 0.0), (0.3, 0.05), (0.1, 0.4)),
            tri((0.2, 0.1), (0.5, 0.2), (0.25, 0.5)),
            tri((0.4, 0.0), (0.52, 0.3), (0.35, 0.2)),
        ];
        let res = 47.3;
        let fast = Rasterizer::new().count(&tris, &region, res);
        let mut slow = 0;
        for j in -10..40 {
            for k in -10..40 {
                let p = Point2::new((j as f64 + 0.5) / res, (k as f64 + 0.5) / res);
                let inside = tris.iter().any(|t| crate::geom::point_in_convex(&t.pts, p));
                if inside && crate::geom::point_in_convex(&region, p) {
                    slow += 1;
                }
            }
        }
        assert_eq!(fast, slow);
    }
}
