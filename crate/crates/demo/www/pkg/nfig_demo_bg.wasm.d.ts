/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_quantized_free: (a: number, b: number) => void;
export const bands: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number, number];
export const quantize: (a: number, b: number, c: number, d: number, e: number, f: number, g: number, h: bigint) => [number, number, number];
export const quantized_frames: (a: number) => [number, number];
export const quantized_mae: (a: number) => number;
export const spectrum: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
export const synthetic: (a: number, b: bigint) => [number, number, number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_start: () => void;
