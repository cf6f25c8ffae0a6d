use glam::DVec3;

/// A half-open ray segment `origin + t * direction` for `t` in `[t_min, t_max]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    pub origin: DVec3,
    pub direction: DVec3,
    pub t_min: f64,
    pub t_max: f64,
}

impl Ray {
    /// Builds an unbounded ray, normalising `direction`.
    pub fn new(origin: DVec3, direction: DVec3) -> Self {
        Self {
            origin,
            direction: direction.normalize(),
            t_min: 0.0,
            t_max: f64::INFINITY,
        }
    }

    #[inline]
    pub fn at(&self, t: f64) -> DVec3 {
        self.origin + self.direction * t
    }
}

/// Slab test against the unit cube `[0,1]^3`.
///
/// Returns `(t0, t1)` with `t0 = max(entry, t_min)` and `t1 = min(exit, t_max)`,
/// or `None` when the clipped interval is empty.
pub fn intersect_unit_cube(ray: &Ray) -> Option<(f64, f64)> {
    let mut t0 = ray.t_min;
    let mut t1 = ray.t_max;
    for axis in 0..3 {
        let o = ray.origin[axis];
        let d = ray.direction[axis];
        if d == 0.0 {
            if !(0.0..=1.0).contains(&o) {
                return None;
            }
            continue;
        }
        let inv = 1.0 / d;
        let (mut near, mut far) = ((0.0 - o) * inv, (1.0 - o) * inv);
        if near > far {
            std::mem::swap(&mut near, &mut far);
        }
        t0 = t0.max(near);
        t1 = t1.min(far);
    }
    if t0 < t1 {
        Some((t0, t1))
    } else {
        None
    }
}
