/* tslint:disable */
/* eslint-disable */

export function likelihoodMap(x: number, y: number, rows: number, cols: number, seed: bigint, p_los: number, p_nlos: number, p_outlier: number, p_failure: number): string;

export function locateBatch(samples: number, rows: number, cols: number, seed: bigint, p_los: number, p_nlos: number, p_outlier: number, p_failure: number, centroid: boolean): string;

export function residualHistograms(samples: number, bins: number, seed: bigint, p_los: number, p_nlos: number, p_outlier: number, p_failure: number): string;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly likelihoodMap: (a: number, b: number, c: number, d: number, e: bigint, f: number, g: number, h: number, i: number) => [number, number, number, number];
    readonly locateBatch: (a: number, b: number, c: number, d: bigint, e: number, f: number, g: number, h: number, i: number) => [number, number, number, number];
    readonly residualHistograms: (a: number, b: number, c: bigint, d: number, e: number, f: number, g: number) => [number, number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
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
