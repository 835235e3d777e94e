#include <pybind11/pybind11.h>

namespace py = pybind11;

PYBIND11_MODULE(_n2fgan, m) {
    m.doc() = "normal-to-fault GAN core bindings";
    m.attr("__version__") = "0.1.0";
}
