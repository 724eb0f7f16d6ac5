/**
 * The rogf binary feature-file layout (the contract with the Python
 * toolkit):
 *
 *   magic "ROGF" | u32 version=1 | u64 N | u64 d | u64 C
 *   | N*d little-endian f32, row major | N little-endian u32 labels
 */
import { ShapeError } from './errors.js'

export const ROGF_MAGIC = 'ROGF'
export const ROGF_VERSION = 1
const HEADER_BYTES = 4 + 4 + 8 * 3

export interface RogfData {
  /** row-major N x d feature matrix */
  features: Float32Array
  labels: Uint32Array
  n: number
  d: number
  numClasses: number
}

export function encodeRogf(data: RogfData): Buffer {
  const { features, labels, n, d, numClasses } = data
  if (features.length !== n * d) {
    throw new ShapeError(`features length ${features.length} != N*d = ${n * d}`)
  }
  if (labels.length !== n) {
    throw new ShapeError(`labels length ${labels.length} != N = ${n}`)
  }
  const buf = Buffer.alloc(HEADER_BYTES + n * d * 4 + n * 4)
  buf.write(ROGF_MAGIC, 0, 'ascii')
  buf.writeUInt32LE(ROGF_VERSION, 4)
  buf.writeBigUInt64LE(BigInt(n), 8)
  buf.writeBigUInt64LE(BigInt(d), 16)
  buf.writeBigUInt64LE(BigInt(numClasses), 24)
  let offset = HEADER_BYTES
  for (let i = 0; i < features.length; i++) {
    buf.writeFloatLE(features[i], offset)
    offset += 4
  }
  for (let i = 0; i < labels.length; i++) {
    buf.writeUInt32LE(labels[i], offset)
    offset += 4
  }
  return buf
}

export function decodeRogf(buf: Buffer): RogfData {
  if (buf.length < HEADER_BYTES) {
    throw new ShapeError('truncated rogf header')
  }
  if (buf.toString('ascii', 0, 4) !== ROGF_MAGIC) {
    throw new ShapeError('bad rogf magic')
  }
  if (buf.readUInt32LE(4) !== ROGF_VERSION) {
    throw new ShapeError('unsupported rogf version')
  }
  const n = Number(buf.readBigUInt64LE(8))
  const d = Number(buf.readBigUInt64LE(16))
  const numClasses = Number(buf.readBigUInt64LE(24))
  const expect = HEADER_BYTES + n * d * 4 + n * 4
  if (buf.length !== expect) {
    throw new ShapeError(`expected ${expect} bytes, found ${buf.length}`)
  }
  const features = new Float32Array(n * d)
  let offset = HEADER_BYTES
  for (let i = 0; i < n * d; i++) {
    features[i] = buf.readFloatLE(offset)
    offset += 4
  }
  const labels = new Uint32Array(n)
  for (let i = 0; i < n; i++) {
    labels[i] = buf.readUInt32LE(offset)
    offset += 4
  }
  return { features, labels, n, d, numClasses }
}
