/** Orbit camera: azimuth/elevation/radius around a target, z up.
 *
 * Matches the CLI's orbit convention: the camera sits at
 * target + radius * (cos(el)cos(az), cos(el)sin(az), sin(el)) and looks at
 * the target. Elevation is clamped to +/-89 degrees, radius to
 * [0.2, 10] x the AABB diagonal.
 */

export type Vec3 = [number, number, number];

const DEG = Math.PI / 180;
export const ELEVATION_LIMIT = 89 * DEG;

function norm(v: Vec3): Vec3 {
  const n = Math.hypot(v[0], v[1], v[2]);
  return [v[0] / n, v[1] / n, v[2] / n];
}

function cross(a: Vec3, b: Vec3): Vec3 {
  return [
    a[1] * b[2] - a[2] * b[1],
    a[2] * b[0] - a[0] * b[2],
    a[0] * b[1] - a[1] * b[0],
  ];
}

export class OrbitCamera {
  azimuth: number; // radians
  elevation: number; // radians
  radius: number;
  readonly target: Vec3;
  readonly minRadius: number;
  readonly maxRadius: number;

  constructor(aabbMin: Vec3, aabbMax: Vec3, azimuth = 0.6, elevation = 0.4) {
    this.target = [
      (aabbMin[0] + aabbMax[0]) / 2,
      (aabbMin[1] + aabbMax[1]) / 2,
      (aabbMin[2] + aabbMax[2]) / 2,
    ];
    const diagonal = Math.hypot(
      aabbMax[0] - aabbMin[0], aabbMax[1] - aabbMin[1], aabbMax[2] - aabbMin[2]
    );
    this.minRadius = 0.2 * diagonal;
    this.maxRadius = 10 * diagonal;
    this.azimuth = azimuth;
    this.elevation = elevation;
    this.radius = 1.2 * diagonal;
  }

  /** Drag by screen-space deltas (radians per unit). */
  rotate(dAzimuth: number, dElevation: number): void {
    this.azimuth = (this.azimuth + dAzimuth) % (2 * Math.PI);
    this.elevation = Math.min(
      ELEVATION_LIMIT, Math.max(-ELEVATION_LIMIT, this.elevation + dElevation)
    );
  }

  /** Multiplicative zoom; factor > 1 moves away. */
  zoom(factor: number): void {
    this.radius = Math.min(this.maxRadius, Math.max(this.minRadius, this.radius * factor));
  }

  eye(): Vec3 {
    const ce = Math.cos(this.elevation);
    return [
      this.target[0] + this.radius * ce * Math.cos(this.azimuth),
      this.target[1] + this.radius * ce * Math.sin(this.azimuth),
      this.target[2] + this.radius * Math.sin(this.elevation),
    ];
  }

  /** Camera-to-world rotation columns (right, up, -forward) plus eye. */
  basis(): { right: Vec3; up: Vec3; back: Vec3; eye: Vec3 } {
    const eye = this.eye();
    const forward = norm([
      this.target[0] - eye[0], this.target[1] - eye[1], this.target[2] - eye[2],
    ]);
    let right = cross(forward, [0, 0, 1]);
    const n = Math.hypot(right[0], right[1], right[2]);
    right = n < 1e-8 ? [1, 0, 0] : [right[0] / n, right[1] / n, right[2] / n];
    const up = cross(right, forward);
    return { right, up, back: [-forward[0], -forward[1], -forward[2]], eye };
  }
}
