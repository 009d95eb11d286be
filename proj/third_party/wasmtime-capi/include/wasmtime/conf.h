/**
 * \file wasmtime/conf.h
 *
 * \brief Build-time defines for how the C API was built.
 *
 * Must match the cargo features in third_party/wasmtime-capi/Cargo.toml.
 */

#ifndef WASMTIME_CONF_H
#define WASMTIME_CONF_H

#define WASMTIME_FEATURE_WASI
#define WASMTIME_FEATURE_DISABLE_LOGGING
#define WASMTIME_FEATURE_CRANELIFT
#define WASMTIME_FEATURE_WAT
#define WASMTIME_FEATURE_COMPONENT_MODEL

#if defined(WASMTIME_FEATURE_CRANELIFT) || defined(WASMTIME_FEATURE_WINCH)
#define WASMTIME_FEATURE_COMPILER
#endif

#endif // WASMTIME_CONF_H
