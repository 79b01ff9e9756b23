//! Float math routed through `std` or `libm` depending on the target.

#[cfg(feature = "std")]
macro_rules! forward {
    ($($name:ident),*) => {
        $(#[inline] pub fn $name(x: f64) -> f64 { f64::$name(x) })*
    };
}

#[cfg(not(feature = "std"))]
macro_rules! forward {
    ($($name:ident),*) => {
        $(#[inline] pub fn $name(x: f64) -> f64 { libm::$name(x) })*
    };
}

forward!(exp, sqrt, sin, cos, floor, round);

#[inline]
pub fn ln(x: f64) -> f64 {
    #[cfg(feature = "std")]
    {
        f64::ln(x)
    }
    #[cfg(not(feature = "std"))]
    {
        libm::log(x)
    }
}

#[inline]
pub fn log10(x: f64) -> f64 {
    #[cfg(feature = "std")]
    {
        f64::log10(x)
    }
    #[cfg(not(feature = "std"))]
    {
        libm::log10(x)
    }
}

/// `e^x - 1`, accurate near zero.
#[inline]
pub fn exp_m1(x: f64) -> f64 {
    #[cfg(feature = "std")]
    {
        f64::exp_m1(x)
    }
    #[cfg(not(feature = "std"))]
    {
        libm::expm1(x)
    }
}

/// `ln(1 + x)`, accurate near zero.
#[inline]
pub fn ln_1p(x: f64) -> f64 {
    #[cfg(feature = "std")]
    {
        f64::ln_1p(x)
    }
    #[cfg(not(feature = "std"))]
    {
        libm::log1p(x)
    }
}

#[inline]
pub fn powf(x: f64, y: f64) -> f64 {
    #[cfg(feature = "std")]
    {
        f64::powf(x, y)
    }
    #[cfg(not(feature = "std"))]
    {
        libm::pow(x, y)
    }
}

#[inline]
pub fn hypot(x: f64, y: f64) -> f64 {
    #[cfg(feature = "std")]
    {
        f64::hypot(x, y)
    }
    #[cfg(not(feature = "std"))]
    {
        libm::hypot(x, y)
    }
}

#[inline]
pub fn abs(x: f64) -> f64 {
    f64::abs(x)
}
