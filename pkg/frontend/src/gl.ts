/** WebGL2 splat renderer: instanced quads with per-instance Gaussian
 * attributes; the vertex shader projects the 3D covariance to a screen-space
 * conic (same first-order math as the native rasterizer) and the fragment
 * shader evaluates the Gaussian falloff.  Splats arrive pre-sorted from the
 * pipeline and blend back-to-front with premultiplied "over" compositing,
 * which composes to the same result as the native front-to-back recurrence.
 */

import { PinholeCamera } from "./camera.js";
import { TexturePack } from "./pipeline.js";

const VERT = `#version 300 es
precision highp float;
layout(location = 0) in vec2 corner;        // quad corner in [-1, 1]
layout(location = 1) in vec4 centerZZ;      // xyz center, w = cov zz
layout(location = 2) in vec4 covA;          // xx, xy, xz, yy
layout(location = 3) in vec4 covYZrgbA;     // yz, r, g, b
layout(location = 4) in float opacity;

uniform mat3 uRot;          // world-to-camera rotation
uniform vec3 uTrans;        // world-to-camera translation
uniform vec2 uFocal;        // fx, fy
uniform vec2 uPrincipal;    // cx, cy
uniform vec2 uViewport;     // width, height

out vec4 vColor;
out vec2 vOffsetPx;
out vec3 vConic;

void main() {
  vec3 cam = uRot * centerZZ.xyz + uTrans;
  if (cam.z < 0.01) { gl_Position = vec4(0.0, 0.0, 2.0, 1.0); return; }
  vec2 mean2d = uFocal * cam.xy / cam.z + uPrincipal;

  mat3 sigma = mat3(
    covA.x, covA.y, covA.z,
    covA.y, covA.w, covYZrgbA.x,
    covA.z, covYZrgbA.x, centerZZ.w);
  float z2 = cam.z * cam.z;
  mat3 J = mat3(
    uFocal.x / cam.z, 0.0, 0.0,
    0.0, uFocal.y / cam.z, 0.0,
    -uFocal.x * cam.x / z2, -uFocal.y * cam.y / z2, 0.0);
  mat3 M = J * uRot;
  mat3 cov2d = M * sigma * transpose(M);
  float a = cov2d[0][0] + 0.3;
  float b = cov2d[0][1];
  float c = cov2d[1][1] + 0.3;

  float det = a * c - b * b;
  vConic = vec3(c, -b, a) / det;
  float mid = 0.5 * (a + c);
  float radius = 3.0 * sqrt(mid + sqrt(max(mid * mid - det, 0.0)));

  vOffsetPx = corner * radius;
  vColor = vec4(covYZrgbA.yzw, opacity);
  vec2 screen = mean2d + vOffsetPx;
  // Pixel centers sit on integer coordinates; flip y for clip space.
  vec2 clip = vec2(
    (screen.x + 0.5) / uViewport.x * 2.0 - 1.0,
    1.0 - (screen.y + 0.5) / uViewport.y * 2.0);
  gl_Position = vec4(clip, 0.0, 1.0);
}
`;

const FRAG = `#version 300 es
precision highp float;
in vec4 vColor;
in vec2 vOffsetPx;
in vec3 vConic;
out vec4 frag;

void main() {
  vec2 d = vOffsetPx;
  float m = vConic.x * d.x * d.x + 2.0 * vConic.y * d.x * d.y + vConic.z * d.y * d.y;
  if (m > 64.0) discard;
  float alpha = min(vColor.a * exp(-0.5 * m), 0.999);
  frag = vec4(vColor.rgb * alpha, alpha);   // premultiplied
}
`;

export class SplatRenderer {
  private gl: WebGL2RenderingContext;
  private program: WebGLProgram;
  private quad: WebGLBuffer;
  private instances: WebGLBuffer;
  private opacities: WebGLBuffer;
  private vao: WebGLVertexArrayObject;
  private capacity = 0;
  private count = 0;

  constructor(canvas: HTMLCanvasElement) {
    const gl = canvas.getContext("webgl2", { antialias: false, alpha: false });
    if (!gl) throw new Error("WebGL2 unavailable");
    this.gl = gl;
    this.program = this.link(VERT, FRAG);
    this.quad = gl.createBuffer()!;
    gl.bindBuffer(gl.ARRAY_BUFFER, this.quad);
    gl.bufferData(
      gl.ARRAY_BUFFER,
      new Float32Array([-1, -1, 1, -1, -1, 1, 1, 1]),
      gl.STATIC_DRAW,
    );
    this.instances = gl.createBuffer()!;
    this.opacities = gl.createBuffer()!;
    this.vao = gl.createVertexArray()!;
    this.configureVao();
    gl.disable(gl.DEPTH_TEST);
    gl.enable(gl.BLEND);
    // Back-to-front "over" with premultiplied alpha.
    gl.blendFunc(gl.ONE, gl.ONE_MINUS_SRC_ALPHA);
  }

  private link(vs: string, fs: string): WebGLProgram {
    const gl = this.gl;
    const compile = (type: number, src: string) => {
      const sh = gl.createShader(type)!;
      gl.shaderSource(sh, src);
      gl.compileShader(sh);
      if (!gl.getShaderParameter(sh, gl.COMPILE_STATUS)) {
        throw new Error(gl.getShaderInfoLog(sh) ?? "shader compile failed");
      }
      return sh;
    };
    const prog = gl.createProgram()!;
    gl.attachShader(prog, compile(gl.VERTEX_SHADER, vs));
    gl.attachShader(prog, compile(gl.FRAGMENT_SHADER, fs));
    gl.linkProgram(prog);
    if (!gl.getProgramParameter(prog, gl.LINK_STATUS)) {
      throw new Error(gl.getProgramInfoLog(prog) ?? "program link failed");
    }
    return prog;
  }

  private configureVao(): void {
    const gl = this.gl;
    gl.bindVertexArray(this.vao);
    gl.bindBuffer(gl.ARRAY_BUFFER, this.quad);
    gl.enableVertexAttribArray(0);
    gl.vertexAttribPointer(0, 2, gl.FLOAT, false, 0, 0);

    gl.bindBuffer(gl.ARRAY_BUFFER, this.instances);
    const stride = 12 * 4;
    gl.enableVertexAttribArray(1);
    gl.vertexAttribPointer(1, 4, gl.FLOAT, false, stride, 0); // center + zz
    gl.vertexAttribDivisor(1, 1);
    gl.enableVertexAttribArray(2);
    gl.vertexAttribPointer(2, 4, gl.FLOAT, false, stride, 4 * 4); // covA + yy
    gl.vertexAttribDivisor(2, 1);
    gl.enableVertexAttribArray(3);
    gl.vertexAttribPointer(3, 4, gl.FLOAT, false, stride, 8 * 4); // yz + rgb
    gl.vertexAttribDivisor(3, 1);

    gl.bindBuffer(gl.ARRAY_BUFFER, this.opacities);
    gl.enableVertexAttribArray(4);
    gl.vertexAttribPointer(4, 1, gl.FLOAT, false, 0, 0);
    gl.vertexAttribDivisor(4, 1);
    gl.bindVertexArray(null);
  }

  /** Upload a sorted texture pack.  The pipeline orders near-to-far (the
   * native blend order); instances draw in index order with back-to-front
   * "over" compositing, so the upload reverses them (farthest first). */
  upload(pack: TexturePack, opacitiesInOrder: Float32Array): void {
    const gl = this.gl;
    const n = pack.count;
    const lanes = new Float32Array(n * 12);
    const opac = new Float32Array(n);
    for (let j = 0; j < n; j++) {
      const src = (n - 1 - j) * 12;
      for (let k = 0; k < 12; k++) lanes[j * 12 + k] = pack.data[src + k];
      opac[j] = opacitiesInOrder[n - 1 - j];
    }
    gl.bindBuffer(gl.ARRAY_BUFFER, this.instances);
    if (n > this.capacity) {
      gl.bufferData(gl.ARRAY_BUFFER, lanes, gl.DYNAMIC_DRAW);
      this.capacity = n;
    } else {
      gl.bufferSubData(gl.ARRAY_BUFFER, 0, lanes);
    }
    gl.bindBuffer(gl.ARRAY_BUFFER, this.opacities);
    gl.bufferData(gl.ARRAY_BUFFER, opac, gl.DYNAMIC_DRAW);
    this.count = n;
  }

  draw(camera: PinholeCamera): void {
    const gl = this.gl;
    gl.viewport(0, 0, camera.width, camera.height);
    gl.clearColor(0, 0, 0, 1);
    gl.clear(gl.COLOR_BUFFER_BIT);
    gl.useProgram(this.program);
    const rot = new Float32Array(9);
    // GLSL mat3 is column-major; ours is row-major.
    for (let rI = 0; rI < 3; rI++) {
      for (let c = 0; c < 3; c++) rot[c * 3 + rI] = camera.rotation[rI * 3 + c];
    }
    gl.uniformMatrix3fv(gl.getUniformLocation(this.program, "uRot"), false, rot);
    gl.uniform3f(
      gl.getUniformLocation(this.program, "uTrans"),
      camera.translation[0], camera.translation[1], camera.translation[2],
    );
    gl.uniform2f(gl.getUniformLocation(this.program, "uFocal"), camera.fx, camera.fy);
    gl.uniform2f(gl.getUniformLocation(this.program, "uPrincipal"), camera.cx, camera.cy);
    gl.uniform2f(gl.getUniformLocation(this.program, "uViewport"), camera.width, camera.height);
    gl.bindVertexArray(this.vao);
    gl.drawArraysInstanced(gl.TRIANGLE_STRIP, 0, 4, this.count);
    gl.bindVertexArray(null);
  }
}
