/* tslint:disable */
/* eslint-disable */

/**
 * Best-response dynamics on the Braess network. `model` is `wardrop` or
 * `atomic`; `time` is `static` or `dynamic`.
 */
export function braess(agents: number, model: string, time: string, shortcut: boolean): string;

/**
 * Two-firm Cournot on a `points x points` action grid: potential surface,
 * value-iteration greedy joint action and its unilateral-deviation gains.
 */
export function cournot_grid(points: number, alpha: number, beta: number, cost: number): string;

/**
 * Gap between a pure unilateral change in the Cournot potential and the same
 * change under Gaussian play, for each `sigma` in the comma-separated list.
 */
export function nascent_gaps(sigmas: string, samples: number, seed: number): string;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly braess: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number, number];
    readonly cournot_grid: (a: number, b: number, c: number, d: number) => [number, number, number, number];
    readonly nascent_gaps: (a: number, b: number, c: number, d: number) => [number, number, number, number];
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
