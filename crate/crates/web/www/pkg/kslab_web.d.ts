/* tslint:disable */
/* eslint-disable */

/**
 * Density field on [−L, L]² advanced by the explicit solver.
 */
export class FieldDemo {
    free(): void;
    [Symbol.dispose](): void;
    /**
     * Row-major n×n values.
     */
    density(): Float64Array;
    /**
     * Relative mass change since the start.
     */
    massDrift(): number;
    n(): number;
    constructor(kind: string, n: number, mass: number, sigma: number, eps: number);
    step(steps: number): void;
    time(): number;
}

/**
 * Interacting particles started from a Gaussian cloud.
 */
export class ParticleDemo {
    free(): void;
    [Symbol.dispose](): void;
    constructor(n: number, eps: number, sigma: number, seed: bigint);
    /**
     * Flattened x, y pairs.
     */
    positions(): Float64Array;
    /**
     * Returns the step size taken.
     */
    step(): number;
    time(): number;
}

export function pressureCurve(m: number, lambda: number, r_max: number, samples: number): Float64Array;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_fielddemo_free: (a: number, b: number) => void;
    readonly __wbg_particledemo_free: (a: number, b: number) => void;
    readonly fielddemo_density: (a: number) => [number, number];
    readonly fielddemo_massDrift: (a: number) => number;
    readonly fielddemo_n: (a: number) => number;
    readonly fielddemo_new: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number];
    readonly fielddemo_step: (a: number, b: number) => [number, number];
    readonly fielddemo_time: (a: number) => number;
    readonly particledemo_new: (a: number, b: number, c: number, d: bigint) => [number, number, number];
    readonly particledemo_positions: (a: number) => [number, number];
    readonly particledemo_step: (a: number) => [number, number, number];
    readonly particledemo_time: (a: number) => number;
    readonly pressureCurve: (a: number, b: number, c: number, d: number) => [number, number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
    readonly __externref_table_dealloc: (a: number) => void;
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
