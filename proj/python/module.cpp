#include <pybind11/pybind11.h>

PYBIND11_MODULE(_sdisco, m) {
    m.doc() = "Conditional distance correlation estimators";
}
