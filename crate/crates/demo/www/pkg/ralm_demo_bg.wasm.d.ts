/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const likelihoodMap: (a: number, b: number, c: number, d: number, e: bigint, f: number, g: number, h: number, i: number) => [number, number, number, number];
export const locateBatch: (a: number, b: number, c: number, d: bigint, e: number, f: number, g: number, h: number, i: number) => [number, number, number, number];
export const residualHistograms: (a: number, b: number, c: bigint, d: number, e: number, f: number, g: number) => [number, number, number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_start: () => void;
