/** Pinhole cameras and interactive orbit controls. */

export interface PinholeCamera {
  width: number;
  height: number;
  fx: number;
  fy: number;
  cx: number;
  cy: number;
  /** Row-major 3x3 world-to-camera rotation. */
  rotation: Float64Array;
  /** World-to-camera translation. */
  translation: Float64Array;
}

export function cameraFromMatrix(
  width: number, height: number, fx: number, fy: number, cx: number, cy: number,
  worldToCamera: ArrayLike<number>,
): PinholeCamera {
  const rotation = new Float64Array(9);
  const translation = new Float64Array(3);
  for (let r = 0; r < 3; r++) {
    for (let c = 0; c < 3; c++) rotation[r * 3 + c] = worldToCamera[r * 4 + c];
    translation[r] = worldToCamera[r * 4 + 3];
  }
  return { width, height, fx, fy, cx, cy, rotation, translation };
}

/** Orbit rig: yaw/pitch around a target at a given distance, plus panning. */
export class OrbitCamera {
  yaw = 0;
  pitch = 0;
  distance = 3.0;
  target = new Float64Array([0, 0, 0]);

  constructor(
    public width: number,
    public height: number,
    public focal: number,
  ) {}

  orbit(dYaw: number, dPitch: number): void {
    this.yaw += dYaw;
    const lim = Math.PI / 2 - 0.05;
    this.pitch = Math.min(lim, Math.max(-lim, this.pitch + dPitch));
  }

  pan(dx: number, dy: number): void {
    // Move the target in the camera's right/up plane.
    const { rotation } = this.toCamera();
    for (let k = 0; k < 3; k++) {
      this.target[k] -= rotation[0 * 3 + k] * dx - rotation[1 * 3 + k] * dy;
    }
  }

  zoom(factor: number): void {
    this.distance = Math.min(50, Math.max(0.2, this.distance * factor));
  }

  toCamera(): PinholeCamera {
    const cp = Math.cos(this.pitch);
    const sp = Math.sin(this.pitch);
    const cyw = Math.cos(this.yaw);
    const syw = Math.sin(this.yaw);
    // Camera center on the orbit sphere (looking at the target).
    const center = [
      this.target[0] + this.distance * cp * syw,
      this.target[1] + this.distance * sp,
      this.target[2] - this.distance * cp * cyw,
    ];
    const fwd = [
      this.target[0] - center[0],
      this.target[1] - center[1],
      this.target[2] - center[2],
    ];
    const fn = Math.hypot(fwd[0], fwd[1], fwd[2]);
    for (let k = 0; k < 3; k++) fwd[k] /= fn;
    const upWorld = [0, 1, 0];
    const right = [
      upWorld[1] * fwd[2] - upWorld[2] * fwd[1],
      upWorld[2] * fwd[0] - upWorld[0] * fwd[2],
      upWorld[0] * fwd[1] - upWorld[1] * fwd[0],
    ];
    const rn = Math.hypot(right[0], right[1], right[2]);
    for (let k = 0; k < 3; k++) right[k] /= rn;
    const up = [
      fwd[1] * right[2] - fwd[2] * right[1],
      fwd[2] * right[0] - fwd[0] * right[2],
      fwd[0] * right[1] - fwd[1] * right[0],
    ];
    const rotation = new Float64Array([...right, ...up, ...fwd]);
    const translation = new Float64Array(3);
    for (let r = 0; r < 3; r++) {
      translation[r] = -(rotation[r * 3] * center[0] + rotation[r * 3 + 1] * center[1]
        + rotation[r * 3 + 2] * center[2]);
    }
    return {
      width: this.width,
      height: this.height,
      fx: this.focal,
      fy: this.focal,
      cx: this.width / 2,
      cy: this.height / 2,
      rotation,
      translation,
    };
  }
}
