/* tslint:disable */
/* eslint-disable */

export function contactSheet(bytes: Uint8Array, tile: number): Uint8Array;

export function evaluateScores(text: string, threshold: number | null | undefined, n_bins: number): string;

export function perturbImage(bytes: Uint8Array, kind: string, level: number): Uint8Array;

export function severityCurve(kind: string, separability: number, n: number, seed: bigint): string;

/**
 * Tags of the default suite in order, e.g. `gamma:-3`.
 */
export function suite_tags(): string[];

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly contactSheet: (a: number, b: number, c: number) => [number, number, number, number];
    readonly evaluateScores: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
    readonly perturbImage: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
    readonly severityCurve: (a: number, b: number, c: number, d: number, e: bigint) => [number, number, number, number];
    readonly suite_tags: () => [number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
    readonly __externref_drop_slice: (a: number, b: number) => void;
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
