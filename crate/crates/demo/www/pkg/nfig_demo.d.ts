/* tslint:disable */
/* eslint-disable */

export class Quantized {
    private constructor();
    free(): void;
    [Symbol.dispose](): void;
    readonly frames: Uint8Array;
    readonly mae: number;
}

/**
 * RGBA frames, one per band, concatenated.
 */
export function bands(rgba: Uint8Array, width: number, height: number, schedule: string): Uint8Array;

export function quantize(rgba: Uint8Array, width: number, height: number, schedule: string, k: number, seed: bigint): Quantized;

/**
 * `bins` mean powers, then the 1/f exponent.
 */
export function spectrum(rgba: Uint8Array, width: number, height: number, bins: number): Float64Array;

export function synthetic(size: number, seed: bigint): Uint8Array;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_quantized_free: (a: number, b: number) => void;
    readonly bands: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number, number];
    readonly quantize: (a: number, b: number, c: number, d: number, e: number, f: number, g: number, h: bigint) => [number, number, number];
    readonly quantized_frames: (a: number) => [number, number];
    readonly quantized_mae: (a: number) => number;
    readonly spectrum: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
    readonly synthetic: (a: number, b: bigint) => [number, number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __wbindgen_start: () => void;
}

export type SyncInitInput = BufferSource | WebAssembly.Module;

/**
 * Instantiates the given `module`, which can either be bytes or
 * a precompiled `WebAssembly.Module`.
 *
 * @param {{ module: SyncInitInput }} module - Passing `SyncInitInput` directly is deprecated.
 *
 * @returns {InitOutput}
 */
export function initSync(module: { module: SyncInitInput } | SyncInitInput): InitOutput;

/**
 * If `module_or_path` is {RequestInfo} or {URL}, makes a request and
 * for everything else, calls `WebAssembly.instantiate` directly.
 *
 * @param {{ module_or_path: InitInput | Promise<InitInput> }} module_or_path - Passing `InitInput` directly is deprecated.
 *
 * @returns {Promise<InitOutput>}
 */
export default function __wbg_init (module_or_path?: { module_or_path: InitInput | Promise<InitInput> } | InitInput | Promise<InitInput>): Promise<InitOutput>;
