/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_fielddemo_free: (a: number, b: number) => void;
export const __wbg_particledemo_free: (a: number, b: number) => void;
export const fielddemo_density: (a: number) => [number, number];
export const fielddemo_massDrift: (a: number) => number;
export const fielddemo_n: (a: number) => number;
export const fielddemo_new: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number];
export const fielddemo_step: (a: number, b: number) => [number, number];
export const fielddemo_time: (a: number) => number;
export const particledemo_new: (a: number, b: number, c: number, d: bigint) => [number, number, number];
export const particledemo_positions: (a: number) => [number, number];
export const particledemo_step: (a: number) => [number, number, number];
export const particledemo_time: (a: number) => number;
export const pressureCurve: (a: number, b: number, c: number, d: number) => [number, number, number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_start: () => void;
