/** WebGL2 resources and per-frame drawing for a decoded model. */

import { OrbitCamera } from "./camera.js";
import { f32ToF16 } from "./f16util.js";
import { PpngModel } from "./model.js";
import { buildFragmentShader, VERTEX_SHADER } from "./shaders.js";

const DEFAULT_FOV_X = (50 * Math.PI) / 180;

function compile(gl: WebGL2RenderingContext, type: number, src: string): WebGLShader {
  const shader = gl.createShader(type)!;
  gl.shaderSource(shader, src);
  gl.compileShader(shader);
  if (!gl.getShaderParameter(shader, gl.COMPILE_STATUS)) {
    const log = gl.getShaderInfoLog(shader);
    gl.deleteShader(shader);
    throw new Error(`shader compile failed: ${log}`);
  }
  return shader;
}

function link(gl: WebGL2RenderingContext, vs: string, fs: string): WebGLProgram {
  const program = gl.createProgram()!;
  gl.attachShader(program, compile(gl, gl.VERTEX_SHADER, vs));
  gl.attachShader(program, compile(gl, gl.FRAGMENT_SHADER, fs));
  gl.linkProgram(program);
  if (!gl.getProgramParameter(program, gl.LINK_STATUS)) {
    throw new Error(`program link failed: ${gl.getProgramInfoLog(program)}`);
  }
  return program;
}

/** Pack a row-major (rows x cols) matrix into column-major mat4 blocks.
 * Block (i, j) holds rows 4i..4i+3 and columns 4j..4j+3; missing rows pad
 * with zeros (used for the 3x16 output layer).
 */
export function packMat4Blocks(
  weights: Float32Array, rows: number, cols: number
): Float32Array {
  const rowBlocks = Math.ceil(rows / 4);
  const colBlocks = cols / 4;
  const out = new Float32Array(rowBlocks * colBlocks * 16);
  let o = 0;
  for (let i = 0; i < rowBlocks; i++) {
    for (let j = 0; j < colBlocks; j++) {
      for (let c = 0; c < 4; c++) {
        for (let r = 0; r < 4; r++) {
          const row = 4 * i + r;
          out[o++] = row < rows ? weights[row * cols + 4 * j + c] : 0;
        }
      }
    }
  }
  return out;
}

export class Viewer {
  readonly camera: OrbitCamera;
  private gl: WebGL2RenderingContext;
  private program: WebGLProgram;
  private dt: number;
  private diagonal: number;

  constructor(private canvas: HTMLCanvasElement, private model: PpngModel) {
    if (model.mlp.w1b) {
      throw new Error("two-layer density branch is not supported by the shader");
    }
    const gl = canvas.getContext("webgl2");
    if (!gl) throw new Error("WebGL2 is not available");
    this.gl = gl;
    this.program = link(gl, VERTEX_SHADER, buildFragmentShader(model));
    gl.useProgram(this.program);

    this.diagonal = Math.hypot(
      model.aabbMax[0] - model.aabbMin[0],
      model.aabbMax[1] - model.aabbMin[1],
      model.aabbMax[2] - model.aabbMin[2]
    );
    this.dt = this.diagonal / 512;
    this.camera = new OrbitCamera(model.aabbMin, model.aabbMax);

    this.uploadFeatureTextures();
    this.uploadOccupancy();
    this.uploadMlp();
    gl.uniform3f(this.loc("uAabbMin"), ...model.aabbMin);
    gl.uniform3f(this.loc("uAabbMax"), ...model.aabbMax);
    gl.uniform1f(this.loc("uDt"), this.dt);
    gl.uniform3f(this.loc("uBackground"), 1, 1, 1);
  }

  private loc(name: string): WebGLUniformLocation | null {
    return this.gl.getUniformLocation(this.program, name);
  }

  private uploadFeatureTextures(): void {
    const { gl, model } = this;
    const q = model.q;
    for (let c = 0; c < model.cubes.length; c++) {
      // re-quantize to binary16 so the GPU samples the stored values
      const cube = model.cubes[c];
      const half = new Uint16Array(cube.length);
      for (let i = 0; i < cube.length; i++) half[i] = f32ToF16(cube[i]);
      gl.activeTexture(gl.TEXTURE1 + c);
      const tex = gl.createTexture();
      gl.bindTexture(gl.TEXTURE_3D, tex);
      gl.texParameteri(gl.TEXTURE_3D, gl.TEXTURE_MIN_FILTER, gl.LINEAR);
      gl.texParameteri(gl.TEXTURE_3D, gl.TEXTURE_MAG_FILTER, gl.LINEAR);
      gl.texParameteri(gl.TEXTURE_3D, gl.TEXTURE_WRAP_S, gl.CLAMP_TO_EDGE);
      gl.texParameteri(gl.TEXTURE_3D, gl.TEXTURE_WRAP_T, gl.CLAMP_TO_EDGE);
      gl.texParameteri(gl.TEXTURE_3D, gl.TEXTURE_WRAP_R, gl.CLAMP_TO_EDGE);
      gl.texImage3D(
        gl.TEXTURE_3D, 0, gl.RGBA16F, q, q, q, 0, gl.RGBA, gl.HALF_FLOAT, half
      );
      gl.uniform1i(this.loc(`uFeat${c}`), 1 + c);
    }
  }

  private uploadOccupancy(): void {
    const { gl, model } = this;
    const g = model.occupancy.resolution;
    const data = new Uint8Array(model.occupancy.cells.length);
    for (let i = 0; i < data.length; i++) data[i] = model.occupancy.cells[i] ? 255 : 0;
    gl.activeTexture(gl.TEXTURE0);
    const tex = gl.createTexture();
    gl.bindTexture(gl.TEXTURE_3D, tex);
    gl.texParameteri(gl.TEXTURE_3D, gl.TEXTURE_MIN_FILTER, gl.NEAREST);
    gl.texParameteri(gl.TEXTURE_3D, gl.TEXTURE_MAG_FILTER, gl.NEAREST);
    gl.pixelStorei(gl.UNPACK_ALIGNMENT, 1);
    gl.texImage3D(gl.TEXTURE_3D, 0, gl.R8, g, g, g, 0, gl.RED, gl.UNSIGNED_BYTE, data);
    gl.uniform1i(this.loc("uOccupancy"), 0);
  }

  private uploadMlp(): void {
    const { gl, model } = this;
    const featureDim = 2 * model.levels * model.channels;
    gl.uniformMatrix4fv(this.loc("uW1"), false, packMat4Blocks(model.mlp.w1, 16, featureDim));
    gl.uniformMatrix4fv(this.loc("uW2"), false, packMat4Blocks(model.mlp.w2, 16, 32));
    gl.uniformMatrix4fv(this.loc("uW3"), false, packMat4Blocks(model.mlp.w3, 3, 16));
  }

  draw(): void {
    const { gl, canvas } = this;
    const w = canvas.width;
    const h = canvas.height;
    gl.viewport(0, 0, w, h);
    gl.useProgram(this.program);
    const { right, up, back, eye } = this.camera.basis();
    gl.uniform3f(this.loc("uEye"), ...eye);
    gl.uniform3f(this.loc("uRight"), ...right);
    gl.uniform3f(this.loc("uUp"), ...up);
    gl.uniform3f(this.loc("uBack"), ...back);
    gl.uniform1f(this.loc("uFocal"), w / 2 / Math.tan(DEFAULT_FOV_X / 2));
    gl.uniform2f(this.loc("uViewport"), w, h);
    gl.drawArrays(gl.TRIANGLES, 0, 3);
  }
}
