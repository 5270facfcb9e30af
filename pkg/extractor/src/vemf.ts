/**
 * VEMF dense matrix files, bit-compatible with the voxelenc reader.
 *
 * Layout (little-endian): 4-byte magic "VEMF", uint32 version (1),
 * uint8 dtype code (0 = float32, 1 = float64), 3 pad bytes, uint64 row
 * count, uint64 column count, then rows * cols values row-major.
 * Header is exactly 28 bytes.
 */

import * as fs from 'node:fs'
import * as path from 'node:path'

export const MAGIC = 'VEMF'
export const VERSION = 1
export const HEADER_SIZE = 28

export type Dtype = 'float32' | 'float64'

const DTYPE_CODE: Record<Dtype, number> = { float32: 0, float64: 1 }
const DTYPE_BYTES: Record<Dtype, number> = { float32: 4, float64: 8 }

export interface Matrix {
  rows: number
  cols: number
  dtype: Dtype
  /** row-major values, length rows * cols */
  data: Float64Array
}

export function encodeMatrix(m: Matrix): Buffer {
  if (m.data.length !== m.rows * m.cols) {
    throw new Error(`data length ${m.data.length} does not match ${m.rows}x${m.cols}`)
  }
  for (let i = 0; i < m.data.length; i++) {
    if (!Number.isFinite(m.data[i])) {
      throw new Error(`non-finite value at flat index ${i}`)
    }
  }
  const itemBytes = DTYPE_BYTES[m.dtype]
  const buf = Buffer.alloc(HEADER_SIZE + m.data.length * itemBytes)
  buf.write(MAGIC, 0, 'ascii')
  buf.writeUInt32LE(VERSION, 4)
  buf.writeUInt8(DTYPE_CODE[m.dtype], 8)
  // bytes 9..11 stay zero padding
  buf.writeBigUInt64LE(BigInt(m.rows), 12)
  buf.writeBigUInt64LE(BigInt(m.cols), 20)
  const view = new DataView(buf.buffer, buf.byteOffset + HEADER_SIZE)
  if (m.dtype === 'float64') {
    for (let i = 0; i < m.data.length; i++) view.setFloat64(i * 8, m.data[i], true)
  } else {
    for (let i = 0; i < m.data.length; i++) view.setFloat32(i * 4, Math.fround(m.data[i]), true)
  }
  return buf
}

export function writeMatrix(m: Matrix, file: string): void {
  fs.mkdirSync(path.dirname(path.resolve(file)), { recursive: true })
  fs.writeFileSync(file, encodeMatrix(m))
}

export function decodeMatrix(buf: Buffer, file = '<buffer>'): Matrix {
  if (buf.length < HEADER_SIZE) {
    throw new Error(`${file}: truncated header (${buf.length} bytes)`)
  }
  if (buf.toString('ascii', 0, 4) !== MAGIC) {
    throw new Error(`${file}: bad magic`)
  }
  const version = buf.readUInt32LE(4)
  if (version !== VERSION) {
    throw new Error(`${file}: unsupported version ${version}`)
  }
  const code = buf.readUInt8(8)
  const dtype: Dtype | undefined = code === 0 ? 'float32' : code === 1 ? 'float64' : undefined
  if (dtype === undefined) {
    throw new Error(`${file}: unknown dtype code ${code}`)
  }
  const rows = Number(buf.readBigUInt64LE(12))
  const cols = Number(buf.readBigUInt64LE(20))
  const expect = HEADER_SIZE + rows * cols * DTYPE_BYTES[dtype]
  if (buf.length !== expect) {
    throw new Error(`${file}: expected ${expect} bytes for ${rows}x${cols} ${dtype}, got ${buf.length}`)
  }
  const view = new DataView(buf.buffer, buf.byteOffset + HEADER_SIZE)
  const data = new Float64Array(rows * cols)
  if (dtype === 'float64') {
    for (let i = 0; i < data.length; i++) data[i] = view.getFloat64(i * 8, true)
  } else {
    for (let i = 0; i < data.length; i++) data[i] = view.getFloat32(i * 4, true)
  }
  return { rows, cols, dtype, data }
}

export function readMatrix(file: string): Matrix {
  return decodeMatrix(fs.readFileSync(file), file)
}
