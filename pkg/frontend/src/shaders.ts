/** GLSL source generation for the fragment-shader ray marcher.
 *
 * The fragment shader replicates the CPU renderer: fixed-step sampling at
 * t0 + (k + 1/2) * dt inside the AABB, occupancy skipping, sinusoidal
 * feature warps, hardware trilinear lookup of the 2L RGBA cubes, the
 * shallow MLP as mat4 chunks, and emission-absorption compositing with
 * early termination below transmittance 1e-4.
 *
 * Sources are generated per model so the cube count, grid sizes, and
 * frequency list are compile-time constants (sampler arrays must be
 * indexed with constants in GLSL ES 3.0).
 */

import { PpngModel } from "./model.js";

export const VERTEX_SHADER = `#version 300 es
void main() {
  // fullscreen triangle from gl_VertexID, no vertex buffers
  vec2 v = vec2((gl_VertexID << 1) & 2, gl_VertexID & 2);
  gl_Position = vec4(v * 2.0 - 1.0, 0.0, 1.0);
}
`;

export function buildFragmentShader(model: PpngModel): string {
  if (model.channels !== 4) {
    throw new Error(`GPU path requires 4 feature channels, file has ${model.channels}`);
  }
  const n = 2 * model.levels; // cubes == vec4 feature blocks
  const freqs = model.freqs.map((f) => f.toFixed(8)).join(", ");

  // one line per cube: warp the position and sample its texture
  const featureLines: string[] = [];
  for (let c = 0; c < n; c++) {
    const level = Math.floor(c / 2);
    const fn = c % 2 === 0 ? "sin" : "cos";
    featureLines.push(
      `  z[${c}] = texture(uFeat${c}, lattice(${fn}(FREQS[${level}] * PI * p01)));`
    );
  }
  const samplerDecls = Array.from(
    { length: n }, (_, c) => `uniform highp sampler3D uFeat${c};`
  ).join("\n");

  return `#version 300 es
precision highp float;
precision highp int;
precision highp sampler3D;

const float PI = 3.141592653589793;
const int N_CUBES = ${n};
const float FREQS[${model.levels}] = float[${model.levels}](${freqs});
const float Q = ${model.q.toFixed(1)};
const float OCC_RES = ${model.occupancy.resolution.toFixed(1)};

uniform vec3 uEye;
uniform vec3 uRight;
uniform vec3 uUp;
uniform vec3 uBack;
uniform float uFocal;
uniform vec2 uViewport;
uniform vec3 uAabbMin;
uniform vec3 uAabbMax;
uniform float uDt;
uniform vec3 uBackground;
uniform highp sampler3D uOccupancy;
${samplerDecls}
uniform mat4 uW1[${4 * n}];
uniform mat4 uW2[32];
uniform mat4 uW3[4];

out vec4 fragColor;

// map a warped coordinate in [-1,1] onto the (Q-1)-cell lattice so that
// hardware linear filtering reproduces clamped trilinear interpolation
vec3 lattice(vec3 s) {
  vec3 u = clamp((s + 1.0) * 0.5, 0.0, 1.0) * (Q - 1.0);
  return (u + 0.5) / Q;
}

vec4 shBlock0(vec3 d) {
  return vec4(0.28209479177387814,
              0.4886025119029199 * d.y,
              0.4886025119029199 * d.z,
              0.4886025119029199 * d.x);
}
vec4 shBlock1(vec3 d) {
  return vec4(1.0925484305920792 * d.x * d.y,
              1.0925484305920792 * d.y * d.z,
              0.9461746957575601 * d.z * d.z - 0.31539156525252005,
              1.0925484305920792 * d.x * d.z);
}
vec4 shBlock2(vec3 d) {
  return vec4(0.5462742152960396 * (d.x * d.x - d.y * d.y),
              0.5900435899266435 * d.y * (3.0 * d.x * d.x - d.y * d.y),
              2.890611442640554 * d.x * d.y * d.z,
              0.4570457994644658 * d.y * (5.0 * d.z * d.z - 1.0));
}
vec4 shBlock3(vec3 d) {
  return vec4(0.3731763325901154 * d.z * (5.0 * d.z * d.z - 3.0),
              0.4570457994644658 * d.x * (5.0 * d.z * d.z - 1.0),
              1.445305721320277 * d.z * (d.x * d.x - d.y * d.y),
              0.5900435899266435 * d.x * (d.x * d.x - 3.0 * d.y * d.y));
}

void main() {
  vec2 xy = (gl_FragCoord.xy - 0.5 * uViewport) / uFocal;
  vec3 dir = normalize(xy.x * uRight + xy.y * uUp - uBack);

  // slab intersection with the AABB
  vec3 inv = 1.0 / dir;
  vec3 tLo = (uAabbMin - uEye) * inv;
  vec3 tHi = (uAabbMax - uEye) * inv;
  vec3 tMin = min(tLo, tHi);
  vec3 tMax = max(tLo, tHi);
  float t0 = max(max(max(tMin.x, tMin.y), tMin.z), 0.0);
  float t1 = min(min(tMax.x, tMax.y), tMax.z);

  vec3 acc = vec3(0.0);
  float T = 1.0;
  int steps = int(floor(max(t1 - t0, 0.0) / uDt + 1e-9));

  vec4 sh[4];
  sh[0] = shBlock0(dir);
  sh[1] = shBlock1(dir);
  sh[2] = shBlock2(dir);
  sh[3] = shBlock3(dir);

  vec4 z[N_CUBES];
  for (int k = 0; k < 100000; k++) {
    if (k >= steps || T < 1e-4) { break; }
    float t = t0 + (float(k) + 0.5) * uDt;
    vec3 pos = uEye + t * dir;
    vec3 p01 = clamp((pos - uAabbMin) / (uAabbMax - uAabbMin), 0.0, 1.0);

    ivec3 cell = clamp(ivec3(p01 * OCC_RES), ivec3(0), ivec3(int(OCC_RES) - 1));
    if (texelFetch(uOccupancy, cell, 0).r < 0.5) { continue; }

${featureLines.join("\n")}

    // density/feature head: h = W1 z
    vec4 h[4];
    for (int i = 0; i < 4; i++) {
      vec4 acc_h = vec4(0.0);
      for (int j = 0; j < N_CUBES; j++) {
        acc_h += uW1[i * N_CUBES + j] * z[j];
      }
      h[i] = acc_h;
    }
    float sigma = exp(clamp(h[0].x, -15.0, 15.0));

    // color branch: g = relu(W2 [sh, h]); c = sigmoid(W3 g)
    vec4 g[4];
    for (int i = 0; i < 4; i++) {
      vec4 acc_g = vec4(0.0);
      for (int j = 0; j < 4; j++) {
        acc_g += uW2[i * 8 + j] * sh[j];
        acc_g += uW2[i * 8 + 4 + j] * h[j];
      }
      g[i] = max(acc_g, 0.0);
    }
    vec4 cPre = uW3[0] * g[0] + uW3[1] * g[1] + uW3[2] * g[2] + uW3[3] * g[3];
    vec3 rgb = 1.0 / (1.0 + exp(-cPre.xyz));

    float atten = exp(-sigma * uDt);
    acc += T * (1.0 - atten) * rgb;
    T *= atten;
  }

  fragColor = vec4(acc + T * uBackground, 1.0);
}
`;
}
